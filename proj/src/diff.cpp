#include "ctn/diff.hpp"

#include <cmath>
#include <string>

#include "ctn/errors.hpp"
#include "ctn/simd/kernels.hpp"

namespace ctn::diff {
namespace {

std::string shape_str(const Value& v) {
  return std::to_string(v.rows()) + "x" + std::to_string(v.cols());
}

void require_same_shape(const Value& a, const Value& b, const char* op) {
  if (&a.tape() != &b.tape()) throw Error(Errc::ShapeMismatch, std::string(op) + ": values from different tapes");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(Errc::ShapeMismatch, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

Tensor like(const Value& v) { return Tensor::zeros(v.rows(), v.cols()); }

// Elementwise unary op with derivative df(x, y) evaluated from input x and output y.
template <class F, class DF>
Value unary(const Value& a, F f, DF df) {
  Tensor out = like(a);
  const auto in = a.data();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(in[i]);
  const int ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, df](Tape& t, int self) {
    double* ga = t.grad(ia);
    const double* g = t.grad(self);
    const double* x = t.data(ia);
    const double* y = t.data(self);
    const std::size_t n = static_cast<std::size_t>(t.rows(self)) * t.cols(self);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols) {
  return Tensor{rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0)};
}

Tensor Tensor::scalar(double v) { return Tensor{1, 1, {v}}; }

Tensor Tensor::from(int rows, int cols, std::vector<double> values) {
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw Error(Errc::ShapeMismatch, "tensor data size does not match shape");
  return Tensor{rows, cols, std::move(values)};
}

int Value::rows() const { return tape_->rows(id_); }
int Value::cols() const { return tape_->cols(id_); }
std::size_t Value::size() const { return static_cast<std::size_t>(rows()) * cols(); }
std::span<const double> Value::data() const { return {tape_->data(id_), size()}; }
std::span<const double> Value::grad() const {
  if (!tape_->backward_done() || !tape_->requires_grad(id_)) return {};
  return {tape_->grad(id_), size()};
}
double Value::item() const {
  if (size() != 1) throw Error(Errc::NonScalarLoss, "item() on " + shape_str(*this));
  return data()[0];
}
Tensor Value::tensor() const {
  auto d = data();
  return Tensor{rows(), cols(), std::vector<double>(d.begin(), d.end())};
}
bool Value::requires_grad() const { return tape_->requires_grad(id_); }

Value Tape::push(Node n) {
  if (done_) throw Error(Errc::DoubleBackward, "tape already differentiated");
  nodes_.push_back(std::move(n));
  return Value(this, static_cast<int>(nodes_.size() - 1));
}

Value Tape::constant(Tensor t) {
  Node n;
  n.rows = t.rows;
  n.cols = t.cols;
  n.owned = std::move(t.data);
  return push(std::move(n));
}

Value Tape::variable(Tensor t) {
  Node n;
  n.rows = t.rows;
  n.cols = t.cols;
  n.owned = std::move(t.data);
  n.requires_grad = true;
  return push(std::move(n));
}

Value Tape::parameter(std::span<const double> data, int rows, int cols, std::span<double> grad_sink) {
  const auto expected = static_cast<std::size_t>(rows) * cols;
  if (data.size() != expected || (!grad_sink.empty() && grad_sink.size() != expected))
    throw Error(Errc::ShapeMismatch, "parameter buffer size does not match shape");
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.borrowed = data.data();
  n.grad_sink = grad_sink.empty() ? nullptr : grad_sink.data();
  n.requires_grad = !grad_sink.empty();
  return push(std::move(n));
}

Value Tape::record(Tensor out, std::vector<int> parents, Vjp vjp) {
  Node n;
  n.rows = out.rows;
  n.cols = out.cols;
  n.owned = std::move(out.data);
  for (int p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) n.vjp = std::move(vjp);
  return push(std::move(n));
}

const double* Tape::data(int id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? n.borrowed : n.owned.data();
}

double* Tape::grad(int id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  return n.grad_sink ? n.grad_sink : n.grad_owned.data();
}

void Tape::backward(const Value& loss) {
  if (&loss.tape() != this) throw Error(Errc::InvalidArgument, "loss belongs to another tape");
  if (done_) throw Error(Errc::DoubleBackward, "backward already ran on this tape");
  if (loss.size() != 1) throw Error(Errc::NonScalarLoss, "loss has shape " + shape_str(loss));
  done_ = true;
  const int root = loss.id();
  for (int i = 0; i <= root; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad && !n.grad_sink) n.grad_owned.assign(static_cast<std::size_t>(n.rows) * n.cols, 0.0);
  }
  if (!nodes_[root].requires_grad) return;
  grad(root)[0] += 1.0;
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.vjp) n.vjp(*this, i);
  }
}

Value add(const Value& a, const Value& b) {
  require_same_shape(a, b, "add");
  Tensor out = like(a);
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x[i] + y[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const double* g = t.grad(self);
    const std::size_t n = static_cast<std::size_t>(t.rows(self)) * t.cols(self);
    for (int p : {ia, ib})
      if (double* gp = t.grad(p)) for (std::size_t i = 0; i < n; ++i) gp[i] += g[i];
  });
}

Value sub(const Value& a, const Value& b) {
  require_same_shape(a, b, "sub");
  Tensor out = like(a);
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x[i] - y[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const double* g = t.grad(self);
    const std::size_t n = static_cast<std::size_t>(t.rows(self)) * t.cols(self);
    if (double* ga = t.grad(ia)) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    if (double* gb = t.grad(ib)) for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
  });
}

Value mul(const Value& a, const Value& b) {
  require_same_shape(a, b, "mul");
  Tensor out = like(a);
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x[i] * y[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const double* g = t.grad(self);
    const double* x = t.data(ia);
    const double* y = t.data(ib);
    const std::size_t n = static_cast<std::size_t>(t.rows(self)) * t.cols(self);
    if (double* ga = t.grad(ia)) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * y[i];
    if (double* gb = t.grad(ib)) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * x[i];
  });
}

Value scale(const Value& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Value add_bias(const Value& x, const Value& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols())
    throw Error(Errc::ShapeMismatch, "add_bias: bias " + shape_str(bias) + " for " + shape_str(x));
  Tensor out = x.tensor();
  const auto b = bias.data();
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) out(r, c) += b[c];
  const int ix = x.id(), ib = bias.id();
  return x.tape().record(std::move(out), {ix, ib}, [ix, ib](Tape& t, int self) {
    const double* g = t.grad(self);
    const int rows = t.rows(self), cols = t.cols(self);
    if (double* gx = t.grad(ix))
      for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i) gx[i] += g[i];
    if (double* gb = t.grad(ib))
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) gb[c] += g[static_cast<std::size_t>(r) * cols + c];
  });
}

Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows())
    throw Error(Errc::ShapeMismatch, "matmul: " + shape_str(a) + " * " + shape_str(b));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros(m, n);
  simd::kernels().gemm_nn(m, n, k, a.data().data(), k, b.data().data(), n, out.data.data(), n);
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape& t, int self) {
    const auto& kern = simd::kernels();
    const double* g = t.grad(self);
    if (double* ga = t.grad(ia)) kern.gemm_nt(m, k, n, g, n, t.data(ib), n, ga, k);
    if (double* gb = t.grad(ib)) kern.gemm_tn(k, n, m, t.data(ia), k, g, n, gb, n);
  });
}

Value relu(const Value& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Value concat(std::span<const Value> parts, Axis axis) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat of nothing");
  Tape& tape = parts[0].tape();
  int rows = 0, cols = 0;
  for (const Value& p : parts) {
    if (&p.tape() != &tape) throw Error(Errc::ShapeMismatch, "concat: values from different tapes");
    if (axis == Axis::Cols) {
      if (rows == 0) rows = p.rows();
      if (p.rows() != rows) throw Error(Errc::ShapeMismatch, "concat cols: row counts differ");
      cols += p.cols();
    } else {
      if (cols == 0) cols = p.cols();
      if (p.cols() != cols) throw Error(Errc::ShapeMismatch, "concat rows: column counts differ");
      rows += p.rows();
    }
  }
  Tensor out = Tensor::zeros(rows, cols);
  std::vector<int> ids;
  std::vector<int> offsets;
  int off = 0;
  for (const Value& p : parts) {
    const auto d = p.data();
    for (int r = 0; r < p.rows(); ++r)
      for (int c = 0; c < p.cols(); ++c) {
        if (axis == Axis::Cols) out(r, off + c) = d[static_cast<std::size_t>(r) * p.cols() + c];
        else out(off + r, c) = d[static_cast<std::size_t>(r) * p.cols() + c];
      }
    ids.push_back(p.id());
    offsets.push_back(off);
    off += axis == Axis::Cols ? p.cols() : p.rows();
  }
  std::vector<int> parents = ids;
  return tape.record(std::move(out), std::move(parents), [ids, offsets, axis](Tape& t, int self) {
    const double* g = t.grad(self);
    const int ocols = t.cols(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      double* gp = t.grad(ids[k]);
      if (!gp) continue;
      const int pr = t.rows(ids[k]), pc = t.cols(ids[k]);
      for (int r = 0; r < pr; ++r)
        for (int c = 0; c < pc; ++c) {
          const std::size_t src = axis == Axis::Cols
                                      ? static_cast<std::size_t>(r) * ocols + offsets[k] + c
                                      : static_cast<std::size_t>(offsets[k] + r) * ocols + c;
          gp[static_cast<std::size_t>(r) * pc + c] += g[src];
        }
    }
  });
}

Value slice(const Value& a, int row0, int nrows, int col0, int ncols) {
  if (row0 < 0 || col0 < 0 || nrows < 0 || ncols < 0 || row0 + nrows > a.rows() || col0 + ncols > a.cols())
    throw Error(Errc::ShapeMismatch, "slice out of range of " + shape_str(a));
  Tensor out = Tensor::zeros(nrows, ncols);
  const auto d = a.data();
  const int acols = a.cols();
  for (int r = 0; r < nrows; ++r)
    for (int c = 0; c < ncols; ++c) out(r, c) = d[static_cast<std::size_t>(row0 + r) * acols + col0 + c];
  const int ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, row0, nrows, col0, ncols, acols](Tape& t, int self) {
    double* ga = t.grad(ia);
    const double* g = t.grad(self);
    for (int r = 0; r < nrows; ++r)
      for (int c = 0; c < ncols; ++c)
        ga[static_cast<std::size_t>(row0 + r) * acols + col0 + c] += g[static_cast<std::size_t>(r) * ncols + c];
  });
}

Value gather_rows(const Value& a, std::vector<int> rows) {
  const int cols = a.cols();
  for (int r : rows)
    if (r < 0 || r >= a.rows()) throw Error(Errc::ShapeMismatch, "gather_rows index out of range");
  Tensor out = Tensor::zeros(static_cast<int>(rows.size()), cols);
  const auto d = a.data();
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (int c = 0; c < cols; ++c) out(static_cast<int>(k), c) = d[static_cast<std::size_t>(rows[k]) * cols + c];
  const int ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, rows = std::move(rows), cols](Tape& t, int self) {
    double* ga = t.grad(ia);
    const double* g = t.grad(self);
    for (std::size_t k = 0; k < rows.size(); ++k)
      for (int c = 0; c < cols; ++c) ga[static_cast<std::size_t>(rows[k]) * cols + c] += g[k * cols + c];
  });
}

namespace {

// Scalar reduction whose gradient is grad_out * dfdx(x_i, result).
template <class DF>
Value reduce(const Value& a, double result, DF dfdx) {
  const int ia = a.id();
  return a.tape().record(Tensor::scalar(result), {ia}, [ia, dfdx](Tape& t, int self) {
    double* ga = t.grad(ia);
    const double g = t.grad(self)[0];
    const double* x = t.data(ia);
    const double y = t.data(self)[0];
    const std::size_t n = static_cast<std::size_t>(t.rows(ia)) * t.cols(ia);
    for (std::size_t i = 0; i < n; ++i) ga[i] += g * dfdx(x[i], y, n);
  });
}

}  // namespace

Value sum(const Value& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return reduce(a, s, [](double, double, std::size_t) { return 1.0; });
}

Value mean(const Value& a) {
  if (a.size() == 0) throw Error(Errc::ShapeMismatch, "mean of empty tensor");
  double s = 0.0;
  for (double x : a.data()) s += x;
  return reduce(a, s / static_cast<double>(a.size()),
                [](double, double, std::size_t n) { return 1.0 / static_cast<double>(n); });
}

Value l1_norm(const Value& a) {
  double s = 0.0;
  for (double x : a.data()) s += std::abs(x);
  return reduce(a, s, [](double x, double, std::size_t) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Value l2_norm(const Value& a) {
  double s = 0.0;
  for (double x : a.data()) s += x * x;
  return reduce(a, std::sqrt(s), [](double x, double y, std::size_t) { return y > 0.0 ? x / y : 0.0; });
}

Value row_l2_norm(const Value& a) {
  const int rows = a.rows(), cols = a.cols();
  Tensor out = Tensor::zeros(rows, 1);
  const auto d = a.data();
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += d[static_cast<std::size_t>(r) * cols + c] * d[static_cast<std::size_t>(r) * cols + c];
    out(r, 0) = std::sqrt(s);
  }
  const int ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, rows, cols](Tape& t, int self) {
    double* ga = t.grad(ia);
    const double* g = t.grad(self);
    const double* x = t.data(ia);
    const double* y = t.data(self);
    for (int r = 0; r < rows; ++r) {
      if (!(y[r] > 0.0)) continue;
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        ga[i] += g[r] * x[i] / y[r];
      }
    }
  });
}

Value sqrt(const Value& a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Value log(const Value& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Value clamp_min(const Value& a, double lo) {
  return unary(a, [lo](double x) { return x > lo ? x : lo; },
               [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Value bilinear_gather(const FeatureMap& map, const Value& points, double scale) {
  if (points.cols() != 2) throw Error(Errc::ShapeMismatch, "bilinear_gather needs N x 2 points");
  if (map.channels <= 0) throw Error(Errc::ShapeMismatch, "bilinear_gather on empty map");
  const int n = points.rows(), nc = map.channels;
  Tensor out = Tensor::zeros(n, nc);
  const auto p = points.data();
  for (int i = 0; i < n; ++i)
    bilinear_sample_into(map, scale * p[2 * i], scale * p[2 * i + 1], &out(i, 0), nullptr, nullptr);
  const int ip = points.id();
  const FeatureMap* mp = &map;
  return points.tape().record(std::move(out), {ip}, [ip, mp, n, nc, scale](Tape& t, int self) {
    double* gp = t.grad(ip);
    const double* g = t.grad(self);
    const double* pts = t.data(ip);
    std::vector<double> dx(nc), dy(nc);
    const auto& kern = simd::kernels();
    for (int i = 0; i < n; ++i) {
      bilinear_sample_into(*mp, scale * pts[2 * i], scale * pts[2 * i + 1], nullptr, dx.data(), dy.data());
      const double* gi = g + static_cast<std::size_t>(i) * nc;
      gp[2 * i] += scale * kern.dot(nc, gi, dx.data());
      gp[2 * i + 1] += scale * kern.dot(nc, gi, dy.data());
    }
  });
}

Value sparse_matmul(const SparseMatrix& op, const Value& x) {
  if (op.n != x.rows()) throw Error(Errc::ShapeMismatch, "sparse_matmul: operator size vs " + shape_str(x));
  const int n = op.n, cols = x.cols();
  Tensor out = Tensor::zeros(n, cols);
  const double* xd = x.data().data();
  const auto& kern = simd::kernels();
  for (int r = 0; r < n; ++r)
    for (int k = op.row_ptr[r]; k < op.row_ptr[r + 1]; ++k)
      kern.axpy(cols, op.val[k], xd + static_cast<std::size_t>(op.col[k]) * cols, &out(r, 0));
  const int ix = x.id();
  const SparseMatrix* mp = &op;
  return x.tape().record(std::move(out), {ix}, [ix, mp, n, cols](Tape& t, int self) {
    double* gx = t.grad(ix);
    const double* g = t.grad(self);
    const auto& kern = simd::kernels();
    // d x = op^T g
    for (int r = 0; r < n; ++r)
      for (int k = mp->row_ptr[r]; k < mp->row_ptr[r + 1]; ++k)
        kern.axpy(cols, mp->val[k], g + static_cast<std::size_t>(r) * cols,
                  gx + static_cast<std::size_t>(mp->col[k]) * cols);
  });
}

}  // namespace ctn::diff
