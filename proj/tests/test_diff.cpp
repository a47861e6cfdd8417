#include <doctest.h>

#include <cmath>
#include <random>

#include "ctn/diff.hpp"
#include "ctn/errors.hpp"
#include "support.hpp"

using namespace ctn;
using namespace ctn::diff;
using ctn::testing::gradient_check;
using ctn::testing::LossFn;
using ctn::testing::random_tensor;

namespace {

constexpr double kTol = 1e-4;
constexpr int kConfigs = 10;

// Reduces a tensor-valued output to a scalar with fixed random weights so
// every output entry contributes to the checked gradient.
Value weighted(Tape& tape, const Value& y, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(y, tape.constant(random_tensor(rng, y.rows(), y.cols()))));
}

// Values bounded away from zero so sign-dependent primitives stay smooth.
Tensor away_from_zero(std::mt19937_64& rng, int rows, int cols) {
  Tensor t = random_tensor(rng, rows, cols, 0.2, 1.5);
  std::bernoulli_distribution flip(0.5);
  for (double& v : t.data)
    if (flip(rng)) v = -v;
  return t;
}

void check_unary(const char* name, const std::function<Value(const Value&)>& op, double lo, double hi,
                 bool signed_input = false) {
  std::mt19937_64 rng(std::hash<std::string>{}(name));
  std::uniform_int_distribution<int> dim(1, 6);
  for (int k = 0; k < kConfigs; ++k) {
    const int r = dim(rng), c = dim(rng);
    const Tensor x = signed_input ? away_from_zero(rng, r, c) : random_tensor(rng, r, c, lo, hi);
    const unsigned long long seed = rng();
    LossFn f = [&](Tape& t, const Value& v) { return weighted(t, op(v), seed); };
    INFO(name << " config " << k);
    CHECK(gradient_check(f, x) <= kTol);
  }
}

SparseMatrix random_sparse(std::mt19937_64& rng, int n) {
  SparseMatrix m;
  m.n = n;
  m.row_ptr.push_back(0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution keep(0.4);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c)
      if (keep(rng) || c == r) {
        m.col.push_back(c);
        m.val.push_back(u(rng));
      }
    m.row_ptr.push_back(static_cast<int>(m.col.size()));
  }
  return m;
}

}  // namespace

TEST_CASE("elementwise binary primitives") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int k = 0; k < kConfigs; ++k) {
    const int r = dim(rng), c = dim(rng);
    const Tensor b = random_tensor(rng, r, c);
    const Tensor x = random_tensor(rng, r, c);
    const unsigned long long seed = rng();
    const std::pair<const char*, std::function<Value(const Value&, const Value&)>> ops[] = {
        {"add", [](const Value& p, const Value& q) { return add(p, q); }},
        {"sub", [](const Value& p, const Value& q) { return sub(p, q); }},
        {"sub_rev", [](const Value& p, const Value& q) { return sub(q, p); }},
        {"mul", [](const Value& p, const Value& q) { return mul(p, q); }},
        {"mul_self", [](const Value& p, const Value&) { return mul(p, p); }},
    };
    for (const auto& [name, op] : ops) {
      LossFn f = [&](Tape& t, const Value& v) { return weighted(t, op(v, t.constant(b)), seed); };
      INFO(name << " config " << k);
      CHECK(gradient_check(f, x) <= kTol);
    }
  }
}

TEST_CASE("scale, bias and matmul") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> dim(1, 7);
  for (int k = 0; k < kConfigs; ++k) {
    const int m = dim(rng), n = dim(rng), p = dim(rng);
    const Tensor a = random_tensor(rng, m, n), b = random_tensor(rng, n, p), bias = random_tensor(rng, 1, n);
    const unsigned long long seed = rng();
    INFO("config " << k);
    CHECK(gradient_check([&](Tape& t, const Value& v) { return weighted(t, scale(v, -2.5), seed); }, a) <= kTol);
    CHECK(gradient_check([&](Tape& t, const Value& v) { return weighted(t, add_bias(v, t.constant(bias)), seed); },
                         a) <= kTol);
    CHECK(gradient_check([&](Tape& t, const Value& v) { return weighted(t, add_bias(t.constant(a), v), seed); },
                         bias) <= kTol);
    CHECK(gradient_check([&](Tape& t, const Value& v) { return weighted(t, matmul(v, t.constant(b)), seed); },
                         a) <= kTol);
    CHECK(gradient_check([&](Tape& t, const Value& v) { return weighted(t, matmul(t.constant(a), v), seed); },
                         b) <= kTol);
  }
}

TEST_CASE("pointwise primitives") {
  check_unary("relu", [](const Value& v) { return relu(v); }, 0, 0, true);
  check_unary("sqrt", [](const Value& v) { return sqrt(v); }, 0.3, 4.0);
  check_unary("log", [](const Value& v) { return log(v); }, 0.3, 4.0);
  check_unary("clamp_min", [](const Value& v) { return clamp_min(v, 0.05); }, 0, 0, true);
}

TEST_CASE("reductions") {
  check_unary("sum", [](const Value& v) { return sum(v); }, -1, 1);
  check_unary("mean", [](const Value& v) { return mean(v); }, -1, 1);
  check_unary("l1_norm", [](const Value& v) { return l1_norm(v); }, 0, 0, true);
  check_unary("l2_norm", [](const Value& v) { return l2_norm(v); }, 0, 0, true);
  check_unary("row_l2_norm", [](const Value& v) { return row_l2_norm(v); }, 0, 0, true);
}

TEST_CASE("structural primitives") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> dim(2, 6);
  for (int k = 0; k < kConfigs; ++k) {
    const int r = dim(rng), c = dim(rng);
    const Tensor x = random_tensor(rng, r, c);
    const Tensor other = random_tensor(rng, r, c + 1);
    const Tensor below = random_tensor(rng, r + 2, c);
    const unsigned long long seed = rng();
    std::uniform_int_distribution<int> pick(0, r - 1);
    std::vector<int> idx;
    for (int i = 0; i < r + 3; ++i) idx.push_back(pick(rng));  // repeats exercise accumulation
    INFO("config " << k);
    CHECK(gradient_check(
              [&](Tape& t, const Value& v) {
                const Value parts[] = {v, t.constant(other), v};
                return weighted(t, concat(parts, Axis::Cols), seed);
              },
              x) <= kTol);
    CHECK(gradient_check(
              [&](Tape& t, const Value& v) {
                const Value parts[] = {t.constant(below), v};
                return weighted(t, concat(parts, Axis::Rows), seed);
              },
              x) <= kTol);
    CHECK(gradient_check([&](Tape& t, const Value& v) { return weighted(t, slice(v, 1, r - 1, 1, c - 1), seed); },
                         x) <= kTol);
    CHECK(gradient_check([&](Tape& t, const Value& v) { return weighted(t, gather_rows(v, idx), seed); }, x) <=
          kTol);
  }
}

TEST_CASE("sparse matmul") {
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> dim(2, 9);
  for (int k = 0; k < kConfigs; ++k) {
    const int n = dim(rng), c = dim(rng);
    const SparseMatrix op = random_sparse(rng, n);
    const Tensor x = random_tensor(rng, n, c);
    const unsigned long long seed = rng();
    CHECK(gradient_check([&](Tape& t, const Value& v) { return weighted(t, sparse_matmul(op, v), seed); }, x) <=
          kTol);
    // Forward against the dense product.
    Tape tape;
    const Value y = sparse_matmul(op, tape.constant(x));
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < c; ++j) {
        double ref = 0.0;
        for (int q = op.row_ptr[r]; q < op.row_ptr[r + 1]; ++q) ref += op.val[q] * x(op.col[q], j);
        CHECK(y.data()[r * c + j] == doctest::Approx(ref).epsilon(1e-14));
      }
  }
}

TEST_CASE("bilinear gather") {
  std::mt19937_64 rng(15);
  FeatureMap map{12, 14, 4, {}};
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  map.data.resize(12 * 14 * 4);
  for (double& v : map.data) v = u(rng);
  for (int k = 0; k < kConfigs; ++k) {
    const double s = (k % 2) ? 0.5 : 1.0;
    Tensor pts = random_tensor(rng, 5, 2, 0.5, 10.5);
    // Keep each sample off the cell edges where bilinear interpolation kinks.
    for (double& v : pts.data) {
      const double f = s * v - std::floor(s * v);
      if (f < 0.01 || f > 0.99) v += 0.1 / s;
    }
    const unsigned long long seed = rng();
    INFO("config " << k);
    CHECK(gradient_check([&](Tape& t, const Value& v) { return weighted(t, bilinear_gather(map, v, s), seed); },
                         pts) <= kTol);
  }
}

TEST_CASE("composite expression") {
  std::mt19937_64 rng(16);
  for (int k = 0; k < kConfigs; ++k) {
    const Tensor w = random_tensor(rng, 4, 3), x = random_tensor(rng, 6, 4);
    LossFn f = [&](Tape& t, const Value& v) {
      const Value h = relu(add_bias(matmul(t.constant(x), v), t.constant(Tensor::from(1, 3, {0.1, -0.2, 0.3}))));
      return add(l2_norm(h), scale(sum(mul(v, v)), 0.5));
    };
    CHECK(gradient_check(f, w) <= kTol);
  }
}

TEST_CASE("relu and l1 subgradients at zero") {
  Tape tape;
  const Value x = tape.variable(Tensor::from(1, 3, {-1.0, 0.0, 2.0}));
  tape.backward(sum(relu(x)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 1.0);

  Tape t2;
  const Value y = t2.variable(Tensor::from(1, 4, {1.0, -3.0, 0.5, 0.0}));
  const Value l = l1_norm(y);
  CHECK(l.item() == 4.5);
  t2.backward(l);
  CHECK(y.grad()[0] == 1.0);
  CHECK(y.grad()[1] == -1.0);
  CHECK(y.grad()[2] == 1.0);
  CHECK(y.grad()[3] == 0.0);
}

TEST_CASE("hand-computed forward values") {
  Tape tape;
  const Value a = tape.constant(Tensor::from(2, 2, {1, 2, 3, 4}));
  const Value b = tape.constant(Tensor::from(2, 2, {5, 6, 7, 8}));
  const Value p = matmul(a, b);
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{19, 22, 43, 50});
  CHECK(mean(a).item() == 2.5);
  CHECK(l2_norm(tape.constant(Tensor::from(1, 2, {3, 4}))).item() == 5.0);
  const Value rn = row_l2_norm(tape.constant(Tensor::from(2, 2, {3, 4, 0, 0})));
  CHECK(rn.data()[0] == 5.0);
  CHECK(rn.data()[1] == 0.0);
  const Value s = slice(a, 1, 1, 0, 2);
  CHECK(s.data()[0] == 3.0);
  CHECK(s.data()[1] == 4.0);
}

TEST_CASE("parameter leaves accumulate into their sink") {
  std::vector<double> w{1.0, 2.0}, g{10.0, 20.0};
  Tape tape;
  const Value p = tape.parameter(w, 1, 2, g);
  tape.backward(sum(mul(p, p)));
  CHECK(g[0] == 12.0);
  CHECK(g[1] == 24.0);
  Tape frozen;
  const Value q = frozen.parameter(w, 1, 2, {});
  CHECK_FALSE(q.requires_grad());
}

TEST_CASE("backward errors") {
  Tape tape;
  const Value x = tape.variable(Tensor::from(1, 2, {1.0, 2.0}));
  try {
    tape.backward(x);
    FAIL("expected NonScalarLoss");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonScalarLoss);
  }
  const Value l = sum(x);
  tape.backward(l);
  try {
    tape.backward(l);
    FAIL("expected DoubleBackward");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DoubleBackward);
  }
  Tape other;
  const Value y = other.variable(Tensor::from(1, 3, {1, 2, 3}));
  CHECK_THROWS_AS(add(y, other.variable(Tensor::from(3, 1, {1, 2, 3}))), Error);
  CHECK_THROWS_AS(matmul(y, y), Error);
  CHECK_THROWS_AS(Tensor::from(2, 2, {1, 2, 3}), Error);
}
