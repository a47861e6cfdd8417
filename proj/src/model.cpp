#include "ctn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "ctn/errors.hpp"
#include "ctn/losses.hpp"

namespace ctn {

RingGraph::RingGraph(int n_) : n(n_), neighbors(n_) {
  if (n < 3) throw Error(Errc::InvalidArgument, "ring graph needs at least 3 vertices");
  for (int i = 0; i < n; ++i) {
    std::set<int> nb;
    for (int d : {-2, -1, 1, 2}) {
      const int j = ((i + d) % n + n) % n;
      if (j != i) nb.insert(j);
    }
    neighbors[i].assign(nb.begin(), nb.end());
  }
  std::vector<double> deg(n);
  for (int i = 0; i < n; ++i) deg[i] = static_cast<double>(neighbors[i].size()) + 1.0;
  op.n = n;
  op.row_ptr.push_back(0);
  for (int i = 0; i < n; ++i) {
    std::vector<int> cols = neighbors[i];
    cols.push_back(i);
    std::sort(cols.begin(), cols.end());
    for (int j : cols) {
      op.col.push_back(j);
      op.val.push_back(1.0 / std::sqrt(deg[i] * deg[j]));
    }
    op.row_ptr.push_back(static_cast<int>(op.col.size()));
  }
}

int ModelConfig::feature_channels() const {
  return static_cast<int>(encoder.factors.size()) * encoder.channels;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"n_vertices", c.n_vertices},
          {"blocks", c.blocks},
          {"hidden", c.hidden},
          {"last_hidden", c.last_hidden},
          {"res_layers", c.res_layers},
          {"append_coords", c.append_coords},
          {"encoder",
           {{"factors", c.encoder.factors},
            {"channels", c.encoder.channels},
            {"derivative_sigma", c.encoder.derivative_sigma},
            {"surround_sigma", c.encoder.surround_sigma},
            {"antialias_sigma", c.encoder.antialias_sigma}}}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.n_vertices = j.value("n_vertices", c.n_vertices);
    c.blocks = j.value("blocks", c.blocks);
    c.hidden = j.value("hidden", c.hidden);
    c.last_hidden = j.value("last_hidden", c.last_hidden);
    c.res_layers = j.value("res_layers", c.res_layers);
    c.append_coords = j.value("append_coords", c.append_coords);
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      c.encoder.factors = e.value("factors", c.encoder.factors);
      c.encoder.channels = e.value("channels", c.encoder.channels);
      c.encoder.derivative_sigma = e.value("derivative_sigma", c.encoder.derivative_sigma);
      c.encoder.surround_sigma = e.value("surround_sigma", c.encoder.surround_sigma);
      c.encoder.antialias_sigma = e.value("antialias_sigma", c.encoder.antialias_sigma);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedJson, std::string("model config: ") + e.what());
  }
}

const NamedTensor& ModelParams::at(const std::string& name) const { return tensors[index_of(name)]; }
NamedTensor& ModelParams::at(const std::string& name) { return tensors[index_of(name)]; }

std::size_t ModelParams::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < tensors.size(); ++i)
    if (tensors[i].name == name) return i;
  throw Error(Errc::InvalidArgument, "no parameter named " + name);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.data.size();
  return n;
}

std::string block_prefix(int k) { return "block" + std::to_string(k) + "."; }

ModelParams init_params(const ModelConfig& config, unsigned long long seed) {
  if (config.blocks < 1 || config.hidden < 1 || config.last_hidden < 1 || config.res_layers < 0)
    throw Error(Errc::InvalidArgument, "invalid model configuration");
  ModelParams p;
  p.config = config;
  std::mt19937_64 rng(seed);
  auto layer = [&](const std::string& name, int in, int out, bool zero) {
    NamedTensor w{name + ".w", in, out, std::vector<double>(static_cast<std::size_t>(in) * out, 0.0)};
    if (!zero) {
      const double bound = std::sqrt(6.0 / (in + out));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : w.data) v = u(rng);
    }
    p.tensors.push_back(std::move(w));
    p.tensors.push_back(NamedTensor{name + ".b", 1, out, std::vector<double>(out, 0.0)});
  };
  for (int k = 0; k < config.blocks; ++k) {
    const std::string pre = block_prefix(k);
    layer(pre + "in", config.input_width(), config.hidden, false);
    for (int r = 0; r < config.res_layers; ++r) {
      layer(pre + "res" + std::to_string(r) + ".a", config.hidden, config.hidden, false);
      layer(pre + "res" + std::to_string(r) + ".b", config.hidden, config.hidden, false);
    }
    layer(pre + "out", config.hidden, config.last_hidden, false);
    layer(pre + "fc", config.last_hidden, 2, true);
  }
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto& t : z.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
  return z;
}

BlockValues bind_block(diff::Tape& tape, const ModelParams& params, int k, ModelParams* grads) {
  auto bind = [&](const std::string& name) {
    const std::size_t i = params.index_of(name);
    const NamedTensor& t = params.tensors[i];
    std::span<double> sink;
    if (grads) sink = grads->tensors[i].data;
    return tape.parameter(t.data, t.rows, t.cols, sink);
  };
  const std::string pre = block_prefix(k);
  BlockValues b;
  b.in_w = bind(pre + "in.w");
  b.in_b = bind(pre + "in.b");
  for (int r = 0; r < params.config.res_layers; ++r) {
    const std::string rp = pre + "res" + std::to_string(r);
    b.res_w1.push_back(bind(rp + ".a.w"));
    b.res_b1.push_back(bind(rp + ".a.b"));
    b.res_w2.push_back(bind(rp + ".b.w"));
    b.res_b2.push_back(bind(rp + ".b.b"));
  }
  b.out_w = bind(pre + "out.w");
  b.out_b = bind(pre + "out.b");
  b.fc_w = bind(pre + "fc.w");
  b.fc_b = bind(pre + "fc.b");
  return b;
}

namespace {

// A X W + b, contracting the narrower side first.
diff::Value graph_conv(const RingGraph& g, const diff::Value& x, const diff::Value& w, const diff::Value& b) {
  const diff::Value mixed = x.cols() <= w.cols() ? diff::matmul(diff::sparse_matmul(g.op, x), w)
                                                 : diff::sparse_matmul(g.op, diff::matmul(x, w));
  return diff::add_bias(mixed, b);
}

}  // namespace

diff::Value gcn_block_forward(const BlockValues& block, const RingGraph& graph, const diff::Value& features) {
  if (features.rows() != graph.n)
    throw Error(Errc::ShapeMismatch, "block input has " + std::to_string(features.rows()) + " rows for a " +
                                         std::to_string(graph.n) + "-vertex ring");
  if (features.cols() != block.in_w.rows())
    throw Error(Errc::ShapeMismatch, "block input width " + std::to_string(features.cols()) + ", expected " +
                                         std::to_string(block.in_w.rows()));
  diff::Value x = diff::relu(graph_conv(graph, features, block.in_w, block.in_b));
  for (std::size_t r = 0; r < block.res_w1.size(); ++r) {
    const diff::Value h = diff::relu(graph_conv(graph, x, block.res_w1[r], block.res_b1[r]));
    x = diff::add(x, diff::relu(graph_conv(graph, h, block.res_w2[r], block.res_b2[r])));
  }
  x = diff::relu(graph_conv(graph, x, block.out_w, block.out_b));
  return diff::add_bias(diff::matmul(x, block.fc_w), block.fc_b);
}

Contour centered_initial(const Contour& exemplar, int width, int height) {
  const Point center{0.5 * (width - 1), 0.5 * (height - 1)};
  return exemplar.translated(center - exemplar.centroid());
}

ForwardTrace forward(diff::Tape& tape, const ModelParams& params, const RingGraph& graph,
                     const FeaturePyramid& pyramid, int width, int height, const Contour& exemplar,
                     ModelParams* grads) {
  const ModelConfig& cfg = params.config;
  if (static_cast<int>(exemplar.size()) != graph.n)
    throw Error(Errc::VertexCountMismatch, "exemplar has " + std::to_string(exemplar.size()) + " vertices, graph " +
                                               std::to_string(graph.n));
  if (pyramid.total_channels() != cfg.feature_channels())
    throw Error(Errc::PyramidMismatch, "pyramid channels do not match the model configuration");
  const int n = graph.n;
  diff::Tensor to_px = diff::Tensor::zeros(n, 2);
  diff::Tensor to_unit = diff::Tensor::zeros(n, 2);
  for (int i = 0; i < n; ++i) {
    to_px(i, 0) = width;
    to_px(i, 1) = height;
    to_unit(i, 0) = 1.0 / width;
    to_unit(i, 1) = 1.0 / height;
  }
  const diff::Value px_scale = tape.constant(std::move(to_px));
  const diff::Value unit_scale = tape.constant(std::move(to_unit));

  ForwardTrace trace;
  trace.stages.push_back(tape.constant(contour_tensor(centered_initial(exemplar, width, height).vertices())));
  for (int k = 0; k < cfg.blocks; ++k) {
    const diff::Value& c = trace.stages.back();
    std::vector<diff::Value> parts;
    for (const auto& level : pyramid.levels) parts.push_back(diff::bilinear_gather(level.map, c, 1.0 / level.factor));
    if (cfg.append_coords) parts.push_back(diff::mul(c, unit_scale));
    const diff::Value q = diff::concat(parts, diff::Axis::Cols);
    const diff::Value offsets = gcn_block_forward(bind_block(tape, params, k, grads), graph, q);
    trace.stages.push_back(diff::add(c, diff::mul(offsets, px_scale)));
  }

  const auto last = trace.final().data();
  bool any_inside = false;
  for (int i = 0; i < n && !any_inside; ++i) {
    const double x = last[2 * i], y = last[2 * i + 1];
    any_inside = x >= 0.0 && x <= width - 1 && y >= 0.0 && y <= height - 1;
  }
  if (!any_inside) throw Error(Errc::ContourOutOfImage, "every vertex left the image");
  return trace;
}

Prediction predict(const ModelParams& params, const FeaturePyramid& pyramid, int width, int height,
                   const Contour& exemplar) {
  diff::Tape tape;
  const RingGraph graph(static_cast<int>(exemplar.size()));
  const ForwardTrace trace = forward(tape, params, graph, pyramid, width, height, exemplar, nullptr);
  Prediction p;
  for (const auto& s : trace.stages) p.stages.push_back(tensor_points(s.data()));
  p.contour = p.stages.back();
  return p;
}

Prediction predict(const ModelParams& params, const ImageGrid& img, const Contour& exemplar) {
  return predict(params, encode_features(img, params.config.encoder), img.width, img.height, exemplar);
}

}  // namespace ctn
