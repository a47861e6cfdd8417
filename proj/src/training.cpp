#include "ctn/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ctn/errors.hpp"

namespace ctn {

TrainConfig TrainConfig::full_preset() {
  TrainConfig c;
  c.n_vertices = 1000;
  c.batch_size = 12;
  c.epochs = 500;
  c.hidden = 256;
  return c;
}

TrainConfig TrainConfig::desk_preset() {
  TrainConfig c;
  c.n_vertices = 100;
  c.batch_size = 8;
  c.epochs = 150;
  c.hidden = 64;
  c.lambda_bend = 3e4;
  c.lambda_pcm = 1e4;
  return c;
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.n_vertices = n_vertices;
  m.blocks = gcn_blocks;
  m.hidden = hidden;
  m.append_coords = append_coords;
  m.encoder = encoder;
  return m;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lambda_perc", c.lambda_perc},
          {"lambda_bend", c.lambda_bend},
          {"lambda_edge", c.lambda_edge},
          {"lambda_pcm", c.lambda_pcm},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"n_vertices", c.n_vertices},
          {"gcn_blocks", c.gcn_blocks},
          {"hidden", c.hidden},
          {"append_coords", c.append_coords},
          {"edge_sigma", c.edge_sigma},
          {"perceptual_distance", c.perceptual_distance == FeatureDistance::L1 ? "l1" : "l2"},
          {"max_consecutive_skips", c.max_consecutive_skips},
          {"encoder", to_json(c.model_config())["encoder"]}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base) {
  if (!j.is_object()) throw Error(Errc::MalformedJson, "training config must be an object");
  try {
    TrainConfig c = base;
    c.lambda_perc = j.value("lambda_perc", c.lambda_perc);
    c.lambda_bend = j.value("lambda_bend", c.lambda_bend);
    c.lambda_edge = j.value("lambda_edge", c.lambda_edge);
    c.lambda_pcm = j.value("lambda_pcm", c.lambda_pcm);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.n_vertices = j.value("n_vertices", c.n_vertices);
    c.gcn_blocks = j.value("gcn_blocks", c.gcn_blocks);
    c.hidden = j.value("hidden", c.hidden);
    c.append_coords = j.value("append_coords", c.append_coords);
    c.edge_sigma = j.value("edge_sigma", c.edge_sigma);
    c.max_consecutive_skips = j.value("max_consecutive_skips", c.max_consecutive_skips);
    if (j.contains("perceptual_distance")) {
      const auto d = j["perceptual_distance"].get<std::string>();
      if (d != "l1" && d != "l2") throw Error(Errc::MalformedJson, "perceptual_distance must be l1 or l2");
      c.perceptual_distance = d == "l1" ? FeatureDistance::L1 : FeatureDistance::L2;
    }
    if (j.contains("encoder")) c.encoder = model_config_from_json({{"encoder", j["encoder"]}}).encoder;
    if (c.lambda_perc < 0 || c.lambda_bend < 0 || c.lambda_edge < 0 || c.lambda_pcm < 0)
      throw Error(Errc::InvalidArgument, "loss weights must be >= 0");
    if (!(c.lr > 0.0)) throw Error(Errc::InvalidArgument, "lr must be > 0");
    if (c.batch_size < 1 || c.epochs < 0) throw Error(Errc::InvalidArgument, "batch_size >= 1 and epochs >= 0");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedJson, std::string("training config: ") + e.what());
  }
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& cfg) {
  if (grads.tensors.size() != params.tensors.size())
    throw Error(Errc::ShapeMismatch, "gradient and parameter lists differ");
  for (std::size_t i = 0; i < grads.tensors.size(); ++i) {
    if (grads.tensors[i].data.size() != params.tensors[i].data.size())
      throw Error(Errc::ShapeMismatch, "gradient shape differs for " + params.tensors[i].name);
    for (double g : grads.tensors[i].data)
      if (!std::isfinite(g)) throw Error(Errc::NonFiniteGradient, "non-finite gradient in " + params.tensors[i].name);
  }
  if (state.m.size() != params.tensors.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& t : params.tensors) {
      state.m.emplace_back(t.data.size(), 0.0);
      state.v.emplace_back(t.data.size(), 0.0);
    }
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& w = params.tensors[i].data;
    const auto& g = grads.tensors[i].data;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] + cfg.weight_decay * w[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      w[k] -= cfg.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
    }
  }
}

nlohmann::json to_json(const EpochLog& e) {
  nlohmann::json j{{"epoch", e.epoch},         {"loss_total", e.loss_total}, {"loss_perc", e.loss_perc},
                   {"loss_bend", e.loss_bend}, {"loss_edge", e.loss_edge},   {"loss_pcm", e.loss_pcm}};
  if (e.train_iou) j["train_iou"] = *e.train_iou;
  if (e.skipped_steps) j["skipped_steps"] = e.skipped_steps;
  return j;
}

namespace {

struct Sample {
  std::size_t item = 0;
  FeaturePyramid pyramid;
  FeatureMap gradient;
  const CorrectionSet* corrections = nullptr;
  Assignment assignment;
};

TrainResult run(ModelParams params, const Dataset& ds, const TrainConfig& cfg, bool with_corrections,
                const EpochCallback& on_epoch) {
  const DataItem& ex = ds.exemplar();
  const Contour& exemplar = *ex.contour;
  if (static_cast<int>(exemplar.size()) != params.config.n_vertices)
    throw Error(Errc::DatasetInvalid, "exemplar has " + std::to_string(exemplar.size()) + " vertices, model expects " +
                                          std::to_string(params.config.n_vertices));
  const EncoderConfig& enc = params.config.encoder;
  const FeaturePyramid exemplar_pyr = encode_features(ex.image, enc);
  const diff::Tensor target = contour_features(exemplar_pyr, exemplar.vertices());
  const BendingPrecomputed bending = precompute_bending(exemplar);
  const RingGraph graph(params.config.n_vertices);

  std::vector<Sample> samples;
  bool all_have_truth = true;
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const DataItem& it = ds.items[i];
    if (it.id == ds.exemplar_id) continue;
    Sample s;
    s.item = i;
    s.pyramid = encode_features(it.image, enc);
    s.gradient = gradient_magnitude_map(it.image, cfg.edge_sigma);
    if (with_corrections && it.corrections && !it.corrections->empty()) s.corrections = &*it.corrections;
    all_have_truth = all_have_truth && it.contour.has_value();
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw Error(Errc::DatasetInvalid, "no unlabeled images besides the exemplar");

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(samples.size());
  AdamState adam;
  ModelParams grads = zeros_like(params);
  TrainResult result;
  int consecutive_skips = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (Sample& s : samples) {
      if (!s.corrections) continue;
      const DataItem& it = ds.items[s.item];
      const auto pred = predict(params, s.pyramid, it.image.width, it.image.height, exemplar);
      s.assignment = correspond_segments(pred.contour, *s.corrections);
    }
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog log;
    log.epoch = epoch;
    double iou_sum = 0.0;
    int counted = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      for (auto& t : grads.tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const Sample& s = samples[order[k]];
        const DataItem& it = ds.items[s.item];
        diff::Tape tape;
        ForwardTrace trace;
        try {
          trace = forward(tape, params, graph, s.pyramid, it.image.width, it.image.height, exemplar, &grads);
        } catch (const Error& e) {
          if (e.code() != Errc::ContourOutOfImage) throw;
          ++log.skipped_steps;
          continue;
        }
        const diff::Value& c = trace.final();
        const diff::Value tgt = tape.parameter(target.data, target.rows, target.cols, {});
        const diff::Value perc = contour_perceptual_loss(c, s.pyramid, tgt, cfg.perceptual_distance);
        const diff::Value bend = contour_bending_loss(c, bending);
        const diff::Value edge = edge_loss(c, s.gradient);
        diff::Value total = diff::add(diff::add(diff::scale(perc, cfg.lambda_perc), diff::scale(bend, cfg.lambda_bend)),
                                      diff::scale(edge, cfg.lambda_edge));
        if (s.corrections) {
          const diff::Value pcm = partial_contour_matching_loss(c, s.assignment);
          log.loss_pcm += pcm.item();
          total = diff::add(total, diff::scale(pcm, cfg.lambda_pcm));
        }
        log.loss_perc += perc.item();
        log.loss_bend += bend.item();
        log.loss_edge += edge.item();
        tape.backward(diff::scale(total, inv_batch));
        if (all_have_truth) {
          const auto pred = tensor_points(c.data());
          iou_sum += polygon_iou(pred, it.contour->vertices(), RasterGrid::for_image(it.image.width, it.image.height));
          ++counted;
        }
      }
      try {
        adam_step(params, grads, adam, cfg);
        consecutive_skips = 0;
      } catch (const Error& e) {
        if (e.code() != Errc::NonFiniteGradient) throw;
        ++log.skipped_steps;
        if (++consecutive_skips > cfg.max_consecutive_skips) throw;
      }
    }
    const double n = static_cast<double>(samples.size());
    log.loss_perc /= n;
    log.loss_bend /= n;
    log.loss_edge /= n;
    log.loss_pcm /= n;
    log.loss_total = cfg.lambda_perc * log.loss_perc + cfg.lambda_bend * log.loss_bend +
                     cfg.lambda_edge * log.loss_edge + cfg.lambda_pcm * log.loss_pcm;
    if (all_have_truth && counted > 0) log.train_iou = iou_sum / counted;
    result.log.push_back(log);
    if (on_epoch && !on_epoch(log, params)) break;
  }
  result.params = std::move(params);
  return result;
}

}  // namespace

TrainResult train_one_shot(const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return run(init_params(cfg.model_config(), cfg.seed), ds, cfg, false, on_epoch);
}

TrainResult finetune_hitl(const ModelParams& params, const Dataset& ds, const TrainConfig& cfg,
                          const EpochCallback& on_epoch) {
  return run(params, ds, cfg, true, on_epoch);
}

}  // namespace ctn
