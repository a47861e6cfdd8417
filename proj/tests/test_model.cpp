#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "ctn/errors.hpp"
#include "ctn/losses.hpp"
#include "ctn/model.hpp"
#include "support.hpp"

using namespace ctn;
using ctn::testing::gradient_check;
using ctn::testing::random_star;
using ctn::testing::random_tensor;
using ctn::testing::TempDir;

namespace {

ModelConfig small_config(int n) {
  ModelConfig c;
  c.n_vertices = n;
  c.blocks = 2;
  c.hidden = 16;
  c.last_hidden = 8;
  c.res_layers = 2;
  return c;
}

// Gives every tensor, the final FC included, nonzero values.
void randomize(ModelParams& p, unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& t : p.tensors)
    for (double& v : t.data) v = u(rng);
}

diff::Tensor roll_rows(const diff::Tensor& x, int s) {
  diff::Tensor out = diff::Tensor::zeros(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) out((r + s) % x.rows, c) = x(r, c);
  return out;
}

ImageGrid textured(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageGrid img = ImageGrid::filled(h, w, 0.0);
  for (double& v : img.values) v = u(rng);
  return gaussian_smooth(img, 1.0);
}

}  // namespace

TEST_CASE("ring graph") {
  const RingGraph g(8);
  for (int i = 0; i < 8; ++i) {
    CHECK(g.neighbors[i].size() == 4);
    // Every row of the normalized operator sums to one on a regular graph.
    double s = 0.0;
    for (int k = g.op.row_ptr[i]; k < g.op.row_ptr[i + 1]; ++k) {
      s += g.op.val[k];
      CHECK(g.op.val[k] == doctest::Approx(0.2));
    }
    CHECK(s == doctest::Approx(1.0));
  }
  CHECK(g.neighbors[0] == std::vector<int>{1, 2, 6, 7});
  CHECK(RingGraph(4).neighbors[0] == std::vector<int>{1, 2, 3});
  CHECK(RingGraph(3).neighbors[0].size() == 2);
  CHECK_THROWS_AS(RingGraph(2), Error);

  // Symmetric operator.
  const RingGraph h(11);
  auto entry = [&](int r, int c) {
    for (int k = h.op.row_ptr[r]; k < h.op.row_ptr[r + 1]; ++k)
      if (h.op.col[k] == c) return h.op.val[k];
    return 0.0;
  };
  for (int r = 0; r < 11; ++r)
    for (int c = 0; c < 11; ++c) CHECK(entry(r, c) == entry(c, r));
}

TEST_CASE("gcn blocks are equivariant to cyclic shifts") {
  const int n = 64;
  ModelConfig cfg = small_config(n);
  cfg.blocks = 3;
  ModelParams p = init_params(cfg, 5);
  randomize(p, 6);
  const RingGraph g(n);
  std::mt19937_64 rng(7);
  for (int k = 0; k < cfg.blocks; ++k) {
    const diff::Tensor x = random_tensor(rng, n, cfg.input_width());
    diff::Tape tape;
    const BlockValues b = bind_block(tape, p, k, nullptr);
    const diff::Value y = gcn_block_forward(b, g, tape.constant(x));
    for (int s : {1, 2, 5, 31, 63}) {
      const diff::Value ys = gcn_block_forward(b, g, tape.constant(roll_rows(x, s)));
      const diff::Tensor expect = roll_rows(y.tensor(), s);
      double worst = 0.0;
      for (std::size_t i = 0; i < expect.data.size(); ++i)
        worst = std::max(worst, std::abs(expect.data[i] - ys.data()[i]));
      INFO("block " << k << " shift " << s);
      CHECK(worst <= 1e-10);
    }
  }
}

TEST_CASE("init params") {
  const ModelConfig cfg = small_config(10);
  const ModelParams p = init_params(cfg, 1);
  const ModelParams q = init_params(cfg, 1);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) CHECK(p.tensors[i].data == q.tensors[i].data);
  CHECK(init_params(cfg, 2).at("block0.in.w").data != p.at("block0.in.w").data);
  for (const char* name : {"block0.fc.w", "block0.fc.b", "block1.fc.w", "block1.fc.b", "block1.in.b"})
    for (double v : p.at(name).data) CHECK(v == 0.0);
  CHECK(p.at("block0.in.w").rows == cfg.input_width());
  CHECK(p.at("block0.in.w").cols == 16);
  CHECK(p.at("block1.res1.b.w").rows == 16);
  CHECK(p.at("block1.out.w").cols == 8);
  CHECK(p.at("block1.fc.w").cols == 2);
  const double bound = std::sqrt(6.0 / (cfg.input_width() + 16));
  for (double v : p.at("block0.in.w").data) CHECK(std::abs(v) <= bound);
  std::size_t count = 0;
  for (const auto& t : p.tensors) count += t.data.size();
  CHECK(p.parameter_count() == count);
  CHECK_THROWS_AS(p.at("nope"), Error);
  ModelConfig bad = cfg;
  bad.blocks = 0;
  CHECK_THROWS_AS(init_params(bad, 1), Error);
}

TEST_CASE("zero final layer returns the centered exemplar") {
  std::mt19937_64 rng(8);
  const ImageGrid img = textured(rng, 72, 88);
  const Contour ex(random_star(rng, 20, {30, 40}, 10, 20));
  const ModelParams p = init_params(small_config(20), 9);
  const Prediction pred = predict(p, img, ex);
  const Contour init = centered_initial(ex, 88, 72);
  CHECK(pred.stages.size() == 3);
  for (int i = 0; i < 20; ++i) {
    CHECK(pred.contour[i].x == init[i].x);
    CHECK(pred.contour[i].y == init[i].y);
  }
  const Point c = init.centroid();
  CHECK(c.x == doctest::Approx(43.5));
  CHECK(c.y == doctest::Approx(35.5));
}

TEST_CASE("forward stages add scaled offsets") {
  std::mt19937_64 rng(10);
  const ImageGrid img = textured(rng, 64, 64);
  const Contour ex(random_star(rng, 12, {32, 32}, 8, 14));
  ModelParams p = init_params(small_config(12), 11);
  // Bias-only FC: each block moves every vertex by (bx * width, by * height).
  p.at("block0.fc.b").data = {0.01, -0.02};
  p.at("block1.fc.b").data = {0.03, 0.0};
  const Prediction pred = predict(p, img, ex);
  for (int i = 0; i < 12; ++i) {
    CHECK(pred.stages[1][i].x - pred.stages[0][i].x == doctest::Approx(0.64));
    CHECK(pred.stages[1][i].y - pred.stages[0][i].y == doctest::Approx(-1.28));
    CHECK(pred.contour[i].x - pred.stages[1][i].x == doctest::Approx(1.92));
  }
  p.at("block1.fc.b").data = {5.0, 5.0};
  try {
    predict(p, img, ex);
    FAIL("expected ContourOutOfImage");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ContourOutOfImage);
  }
  const Contour wrong(random_star(rng, 13, {32, 32}, 8, 14));
  CHECK_THROWS_AS(predict(p, img, wrong), Error);
}

TEST_CASE("block gradients against finite differences") {
  const int n = 9;
  ModelConfig cfg = small_config(n);
  cfg.hidden = 6;
  cfg.last_hidden = 4;
  cfg.res_layers = 1;
  cfg.encoder.channels = 1;
  cfg.encoder.factors = {1};
  ModelParams p = init_params(cfg, 12);
  randomize(p, 13);
  const RingGraph g(n);
  std::mt19937_64 rng(14);
  for (int k = 0; k < 10; ++k) {
    const diff::Tensor x = random_tensor(rng, n, cfg.input_width());
    const diff::Tensor w = random_tensor(rng, n, 2);
    auto f = [&](diff::Tape& t, const diff::Value& v) {
      return diff::sum(diff::mul(gcn_block_forward(bind_block(t, p, 0, nullptr), g, v), t.constant(w)));
    };
    CHECK(gradient_check(f, x) <= 1e-4);
  }
}

TEST_CASE("parameter gradients reach their buffers") {
  std::mt19937_64 rng(15);
  const ImageGrid img = textured(rng, 64, 64);
  const FeaturePyramid pyr = encode_features(img);
  const Contour ex(random_star(rng, 10, {31.3, 32.7}, 8, 14));
  ModelParams p = init_params(small_config(10), 16);
  randomize(p, 17);
  for (auto& t : p.tensors) for (double& v : t.data) v *= 0.1;
  ModelParams grads = zeros_like(p);
  const RingGraph g(10);
  diff::Tape tape;
  const ForwardTrace tr = forward(tape, p, g, pyr, 64, 64, ex, &grads);
  tape.backward(diff::sum(tr.final()));
  // The last bias moves every vertex by its value times the image size.
  CHECK(grads.at("block1.fc.b").data[0] == doctest::Approx(10 * 64.0));
  CHECK(grads.at("block1.fc.b").data[1] == doctest::Approx(10 * 64.0));
  double mag = 0.0;
  for (double v : grads.at("block0.in.w").data) mag += std::abs(v);
  CHECK(mag > 0.0);

  // One parameter entry checked numerically through the whole cascade.
  const std::string name = "block0.out.w";
  auto loss_at = [&](double delta) {
    ModelParams q = p;
    q.at(name).data[3] += delta;
    diff::Tape t;
    return diff::sum(forward(t, q, g, pyr, 64, 64, ex).final()).item();
  };
  const double h = 1e-5;
  const double fd = (loss_at(h) - loss_at(-h)) / (2 * h);
  CHECK(grads.at(name).data[3] == doctest::Approx(fd).epsilon(1e-4));
}

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("model");
  ModelConfig cfg = small_config(14);
  cfg.append_coords = false;
  cfg.encoder.channels = 5;
  ModelParams p = init_params(cfg, 18);
  randomize(p, 19);
  p.tensors[0].data[0] = -0.0;
  p.tensors[0].data[1] = 1e-310;
  const std::string path = dir.str() + "/m.bin";
  const nlohmann::json extra{{"note", "hi"}};
  save_checkpoint(path, p, extra);
  nlohmann::json got_extra;
  const ModelParams q = load_checkpoint(path, &got_extra);
  CHECK(got_extra == extra);
  CHECK(to_json(q.config) == to_json(cfg));
  REQUIRE(q.tensors.size() == p.tensors.size());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    CHECK(q.tensors[i].name == p.tensors[i].name);
    CHECK(q.tensors[i].rows == p.tensors[i].rows);
    CHECK(std::memcmp(q.tensors[i].data.data(), p.tensors[i].data.data(), p.tensors[i].data.size() * 8) == 0);
  }
  CHECK(serialize_checkpoint(q, extra) == read_file(path));
  CHECK(std::signbit(q.tensors[0].data[0]));
}

TEST_CASE("corrupt checkpoints") {
  const ModelParams p = init_params(small_config(6), 20);
  const std::string good = serialize_checkpoint(p);
  auto code_of = [](const std::string& bytes) {
    try {
      parse_checkpoint(bytes);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::Io;
  };
  CHECK(code_of("") == Errc::CheckpointFormat);
  CHECK(code_of("{not json\n") == Errc::CheckpointFormat);
  CHECK(code_of(good.substr(0, good.size() - 8)) == Errc::CheckpointFormat);
  std::string v2 = good;
  v2.replace(v2.find("\"format_version\":1"), 18, "\"format_version\":2");
  CHECK(code_of(v2) == Errc::CheckpointFormat);
  CHECK(code_of("{\"format_version\":1}\n") == Errc::CheckpointFormat);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), Error);
}

TEST_CASE("model config json") {
  ModelConfig c = small_config(33);
  c.encoder.factors = {1, 2};
  c.encoder.surround_sigma = 3.5;
  const ModelConfig d = model_config_from_json(to_json(c));
  CHECK(d.n_vertices == 33);
  CHECK(d.hidden == 16);
  CHECK(d.encoder.factors == std::vector<int>{1, 2});
  CHECK(d.encoder.surround_sigma == 3.5);
  CHECK(d.input_width() == 2 * 8 + 2);
}
