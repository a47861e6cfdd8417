#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ctn/diff.hpp"
#include "ctn/geometry.hpp"
#include "ctn/imaging.hpp"

namespace ctn {

// Cycle graph where vertex i links to i +- 1 and i +- 2, with the
// symmetrically normalized operator D^-1/2 (A + I) D^-1/2.
struct RingGraph {
  int n = 0;
  std::vector<std::vector<int>> neighbors;
  diff::SparseMatrix op;

  explicit RingGraph(int n);
};

struct ModelConfig {
  int n_vertices = 100;
  int blocks = 5;
  int hidden = 256;
  int last_hidden = 32;
  int res_layers = 6;
  bool append_coords = true;
  EncoderConfig encoder;

  int feature_channels() const;
  int input_width() const { return feature_channels() + (append_coords ? 2 : 0); }
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct NamedTensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> data;
};

struct ModelParams {
  ModelConfig config;
  std::vector<NamedTensor> tensors;

  const NamedTensor& at(const std::string& name) const;
  NamedTensor& at(const std::string& name);
  std::size_t index_of(const std::string& name) const;
  std::size_t parameter_count() const;
};

// Glorot-uniform weights, zero biases, zero final FC so the untrained cascade
// returns its initial contour.
ModelParams init_params(const ModelConfig& config, unsigned long long seed);
// Same names and shapes, all zeros.
ModelParams zeros_like(const ModelParams& p);

// Tensor name prefix for block k, e.g. "block2.".
std::string block_prefix(int k);

// Per-block layer values bound to one tape.
struct BlockValues {
  diff::Value in_w, in_b;
  std::vector<diff::Value> res_w1, res_b1, res_w2, res_b2;
  diff::Value out_w, out_b;
  diff::Value fc_w, fc_b;
};

// Binds block k of params to the tape; grads (when non-null, same layout as
// params) receive the accumulated gradients.
BlockValues bind_block(diff::Tape& tape, const ModelParams& params, int k, ModelParams* grads);

// GraphConv(in->hidden)+ReLU, residual GraphResConv stack, GraphConv(->last)+ReLU, FC(->2).
diff::Value gcn_block_forward(const BlockValues& block, const RingGraph& graph, const diff::Value& features);

// Exemplar translated so its vertex centroid sits at the image center.
Contour centered_initial(const Contour& exemplar, int width, int height);

struct ForwardTrace {
  std::vector<diff::Value> stages;  // C_0 .. C_K, each N x 2 pixel coordinates
  const diff::Value& final() const { return stages.back(); }
};

ForwardTrace forward(diff::Tape& tape, const ModelParams& params, const RingGraph& graph,
                     const FeaturePyramid& pyramid, int width, int height, const Contour& exemplar,
                     ModelParams* grads = nullptr);

struct Prediction {
  std::vector<Point> contour;
  std::vector<std::vector<Point>> stages;
};

Prediction predict(const ModelParams& params, const FeaturePyramid& pyramid, int width, int height,
                   const Contour& exemplar);
Prediction predict(const ModelParams& params, const ImageGrid& img, const Contour& exemplar);

// Checkpoint: one line of JSON header {format_version, config, tensors[{name, shape, offset}]}
// followed by the little-endian float64 payload. Offsets are bytes from the payload start.
std::string serialize_checkpoint(const ModelParams& params, const nlohmann::json& extra = {});
ModelParams parse_checkpoint(const std::string& bytes, nlohmann::json* extra = nullptr);
void save_checkpoint(const std::string& path, const ModelParams& params, const nlohmann::json& extra = {});
ModelParams load_checkpoint(const std::string& path, nlohmann::json* extra = nullptr);

// Writes to path.tmp then renames over path.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace ctn
