#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctn/data.hpp"
#include "ctn/losses.hpp"
#include "ctn/model.hpp"

namespace ctn {

struct TrainConfig {
  double lambda_perc = 1.0;
  double lambda_bend = 0.25;
  double lambda_edge = 0.1;
  double lambda_pcm = 1.0;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 8;
  int epochs = 150;
  std::uint64_t seed = 0;
  int n_vertices = 100;
  int gcn_blocks = 5;
  int hidden = 256;
  bool append_coords = true;
  double edge_sigma = 1.0;  // smoothing before the gradient-magnitude map
  FeatureDistance perceptual_distance = FeatureDistance::L1;
  EncoderConfig encoder;
  int max_consecutive_skips = 5;

  // N = 1000, batch 12, 500 epochs, lr 1e-4, wd 1e-4, lambdas (1, 0.25, 0.1, 1).
  static TrainConfig full_preset();
  // N = 100, batch 8, 150 epochs, hidden 64, lambdas (1, 3e4, 0.1, 1e4).
  static TrainConfig desk_preset();

  ModelConfig model_config() const;
};

nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep the values of base.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = TrainConfig::desk_preset());

struct AdamState {
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Adam with bias correction; weight decay is added to the gradient.
// Throws NonFiniteGradient (naming the tensor) before touching params.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_perc = 0.0;
  double loss_bend = 0.0;
  double loss_edge = 0.0;
  double loss_pcm = 0.0;
  std::optional<double> train_iou;
  int skipped_steps = 0;
};

nlohmann::json to_json(const EpochLog& e);

struct TrainResult {
  ModelParams params;
  std::vector<EpochLog> log;
};

// Called after every epoch with the current parameters; return false to stop early.
using EpochCallback = std::function<bool(const EpochLog&, const ModelParams&)>;

// Minimizes lambda_perc * L_perc + lambda_bend * L_bend + lambda_edge * L_edge at
// the final contour, averaged over each batch of unlabeled images.
TrainResult train_one_shot(const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Same loop starting from params, adding lambda_pcm * L_pcm on images that carry
// corrections. Correspondences are recomputed from the current predictions at
// the start of every epoch. Without corrections this is plain one-shot training.
TrainResult finetune_hitl(const ModelParams& params, const Dataset& ds, const TrainConfig& cfg,
                          const EpochCallback& on_epoch = {});

}  // namespace ctn
