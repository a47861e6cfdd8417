#include "ctn/eval.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "ctn/errors.hpp"
#include "ctn/losses.hpp"

namespace fs = std::filesystem;

namespace ctn {

void EvalReport::aggregate() {
  mean_iou = std_iou = mean_hd = std_hd = 0.0;
  if (rows.empty()) return;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    mean_iou += r.iou;
    mean_hd += r.hd;
  }
  mean_iou /= n;
  mean_hd /= n;
  for (const auto& r : rows) {
    std_iou += (r.iou - mean_iou) * (r.iou - mean_iou);
    std_hd += (r.hd - mean_hd) * (r.hd - mean_hd);
  }
  std_iou = std::sqrt(std_iou / n);
  std_hd = std::sqrt(std_hd / n);
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"label", r.label},     {"n", r.rows.size()},     {"mean_iou", r.mean_iou}, {"std_iou", r.std_iou},
          {"mean_hd", r.mean_hd}, {"std_hd", r.std_hd},     {"config", r.config}};
}

ContourScore score_contour(std::span<const Point> pred, const Contour& truth, int width, int height) {
  ContourScore s;
  s.iou = polygon_iou(pred, truth.vertices(), RasterGrid::for_image(width, height));
  try {
    s.hd = hausdorff(resample_uniform(pred, static_cast<int>(truth.size())), truth);
  } catch (const Error& e) {
    if (e.code() != Errc::DegenerateContour) throw;
    s.hd = hausdorff(pred, truth.vertices());
  }
  return s;
}

EvalReport evaluate(const ModelParams& params, const Contour& exemplar, const Dataset& test) {
  std::map<std::string, std::vector<Point>> preds;
  for (const auto& it : test.items) {
    if (!it.contour) throw Error(Errc::MissingGroundTruth, "no ground truth for " + it.id);
    preds[it.id] = predict(params, it.image, exemplar).contour;
  }
  EvalReport r = evaluate_predictions(test, preds);
  r.config = {{"model", to_json(params.config)}};
  return r;
}

EvalReport evaluate_predictions(const Dataset& test, const std::map<std::string, std::vector<Point>>& predictions) {
  EvalReport r;
  for (const auto& it : test.items) {
    if (!it.contour) throw Error(Errc::MissingGroundTruth, "no ground truth for " + it.id);
    const auto p = predictions.find(it.id);
    if (p == predictions.end()) throw Error(Errc::InvalidArgument, "no prediction for " + it.id);
    const auto s = score_contour(p->second, *it.contour, it.image.width, it.image.height);
    r.rows.push_back({it.id, s.iou, s.hd});
  }
  r.aggregate();
  return r;
}

nlohmann::json points_to_json(std::span<const Point> pts) {
  nlohmann::json v = nlohmann::json::array();
  for (const Point& p : pts) v.push_back({p.x, p.y});
  return {{"vertices", v}, {"closed", true}};
}

std::vector<Point> points_from_json(const nlohmann::json& j) {
  try {
    std::vector<Point> pts;
    for (const auto& v : j.at("vertices")) {
      if (!v.is_array() || v.size() != 2) throw Error(Errc::MalformedJson, "vertex must be [x, y]");
      pts.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    return pts;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedJson, e.what());
  }
}

Contour acm_baseline(const ImageGrid& img, const Contour& init, const AcmConfig& cfg) {
  const FeatureMap gmap = gradient_magnitude_map(img, cfg.sigma);
  const BendingPrecomputed pre = precompute_bending(init);
  std::vector<Point> pts = init.vertices();
  for (int step = 0; step < cfg.steps && cfg.step_size != 0.0; ++step) {
    diff::Tape tape;
    const diff::Value c = tape.variable(contour_tensor(pts));
    diff::Value loss = diff::scale(edge_loss(c, gmap), cfg.edge_weight);
    if (cfg.bend_weight != 0.0) loss = diff::add(loss, diff::scale(contour_bending_loss(c, pre), cfg.bend_weight));
    tape.backward(loss);
    const auto g = c.grad();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      pts[i].x -= cfg.step_size * g[2 * i];
      pts[i].y -= cfg.step_size * g[2 * i + 1];
    }
  }
  return Contour(pts);
}

namespace {

EvalReport train_and_evaluate(const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                              const std::string& label) {
  const TrainResult res = train_one_shot(train, cfg);
  EvalReport r = evaluate(res.params, train.exemplar_contour(), test);
  r.label = label;
  r.config = {{"train", to_json(cfg)}, {"exemplar", train.exemplar_id}};
  return r;
}

}  // namespace

std::vector<EvalReport> run_ablation(const Dataset& train, const Dataset& test, const TrainConfig& cfg) {
  std::vector<EvalReport> out;
  out.push_back(train_and_evaluate(train, test, cfg, "full"));
  TrainConfig c = cfg;
  c.lambda_perc = 0.0;
  out.push_back(train_and_evaluate(train, test, c, "no_perc"));
  c = cfg;
  c.lambda_bend = 0.0;
  out.push_back(train_and_evaluate(train, test, c, "no_bend"));
  c = cfg;
  c.lambda_edge = 0.0;
  out.push_back(train_and_evaluate(train, test, c, "no_edge"));
  return out;
}

EvalReport run_perturbation(const ModelParams& params, const Contour& exemplar, const Dataset& test, double dx,
                            double dy, double dtheta_deg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto draw = [&rng](double bound) {
    return bound > 0.0 ? std::uniform_real_distribution<double>(-bound, bound)(rng) : 0.0;
  };
  Dataset moved = test;
  for (auto& it : moved.items) {
    if (!it.contour) throw Error(Errc::MissingGroundTruth, "no ground truth for " + it.id);
    const double ox = draw(dx), oy = draw(dy);
    const double angle = draw(dtheta_deg) * std::numbers::pi / 180.0;
    const int w = it.image.width, h = it.image.height;
    it.image = rigid_transform(it.image, ox, oy, angle);
    std::vector<Point> gt;
    for (const Point& p : it.contour->vertices()) gt.push_back(rigid_transform_point(p, w, h, ox, oy, angle));
    it.contour = Contour(gt);
  }
  EvalReport r = evaluate(params, exemplar, moved);
  r.label = "perturbed";
  r.config = {{"dx", dx}, {"dy", dy}, {"dtheta_deg", dtheta_deg}, {"seed", seed}};
  return r;
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "lambda1") return SweepAxis::LambdaPerc;
  if (name == "lambda2") return SweepAxis::LambdaBend;
  if (name == "lambda3") return SweepAxis::LambdaEdge;
  if (name == "blocks") return SweepAxis::Blocks;
  throw Error(Errc::InvalidArgument, "unknown sweep axis '" + name + "'");
}

std::vector<EvalReport> run_sweep(const Dataset& train, const Dataset& test, const TrainConfig& cfg, SweepAxis axis,
                                  const std::vector<double>& values) {
  std::vector<EvalReport> out;
  for (double v : values) {
    TrainConfig c = cfg;
    std::string name;
    switch (axis) {
      case SweepAxis::LambdaPerc: c.lambda_perc = v; name = "lambda1"; break;
      case SweepAxis::LambdaBend: c.lambda_bend = v; name = "lambda2"; break;
      case SweepAxis::LambdaEdge: c.lambda_edge = v; name = "lambda3"; break;
      case SweepAxis::Blocks:
        if (v < 1.0 || v != std::floor(v)) throw Error(Errc::InvalidArgument, "block count must be a positive integer");
        c.gcn_blocks = static_cast<int>(v);
        name = "blocks";
        break;
    }
    char label[64];
    std::snprintf(label, sizeof(label), "%s=%g", name.c_str(), v);
    out.push_back(train_and_evaluate(train, test, c, label));
  }
  return out;
}

std::vector<EvalReport> run_exemplar_sweep(const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                                           const std::vector<std::string>& exemplar_ids) {
  std::vector<EvalReport> out;
  for (const auto& id : exemplar_ids) {
    Dataset ds = train;
    ds.exemplar_id = id;
    out.push_back(train_and_evaluate(ds, test, cfg, "exemplar=" + id));
  }
  return out;
}

std::string reports_csv(const std::vector<EvalReport>& reports) {
  std::string out = "label,id,iou,hd\n";
  char line[512];
  for (const auto& r : reports)
    for (const auto& row : r.rows) {
      std::snprintf(line, sizeof(line), "%s,%s,%.17g,%.17g\n", r.label.c_str(), row.id.c_str(), row.iou, row.hd);
      out += line;
    }
  return out;
}

nlohmann::json reports_json(const std::string& suite, const std::vector<EvalReport>& reports) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : reports) rows.push_back(to_json(r));
  return {{"suite", suite}, {"reports", rows}};
}

std::string write_reports(const std::string& root, const std::string& suite, const std::string& stamp,
                          const std::vector<EvalReport>& reports) {
  const fs::path dir = fs::path(root) / "reports" / suite / stamp;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + dir.string());
  write_file_atomic((dir / "summary.json").string(), reports_json(suite, reports).dump(2) + "\n");
  write_file_atomic((dir / "per_image.csv").string(), reports_csv(reports));
  return dir.string();
}

}  // namespace ctn
