#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctn/data.hpp"
#include "ctn/model.hpp"
#include "ctn/training.hpp"

namespace ctn {

struct EvalRow {
  std::string id;
  double iou = 0.0;
  double hd = 0.0;
};

struct EvalReport {
  std::string label;
  std::vector<EvalRow> rows;
  double mean_iou = 0.0;
  double std_iou = 0.0;  // population
  double mean_hd = 0.0;
  double std_hd = 0.0;
  nlohmann::json config;

  // Recomputes the aggregates from rows.
  void aggregate();
};

nlohmann::json to_json(const EvalReport& r);  // aggregates only

struct ContourScore {
  double iou = 0.0;
  double hd = 0.0;
};

// IoU on the image pixel grid; Hausdorff distance between vertex sets after
// resampling the prediction to the ground truth's vertex count.
ContourScore score_contour(std::span<const Point> pred, const Contour& truth, int width, int height);

// Predicts every item (all of them must carry ground truth) and scores it.
EvalReport evaluate(const ModelParams& params, const Contour& exemplar, const Dataset& test);
// Scores precomputed predictions keyed by image id.
EvalReport evaluate_predictions(const Dataset& test, const std::map<std::string, std::vector<Point>>& predictions);

// Point list in the contour JSON schema, without orientation normalization.
nlohmann::json points_to_json(std::span<const Point> pts);
std::vector<Point> points_from_json(const nlohmann::json& j);

struct AcmConfig {
  int steps = 200;
  double step_size = 100.0;
  double edge_weight = 0.1;
  double bend_weight = 0.0;
  double sigma = 2.0;
};

// Per-image snake: gradient descent on edge_weight * L_edge + bend_weight * L_bend
// (bending measured against init) directly over the vertex coordinates.
Contour acm_baseline(const ImageGrid& img, const Contour& init, const AcmConfig& cfg);

// Full model plus one run with each of lambda_perc, lambda_bend, lambda_edge zeroed.
// Labels: full, no_perc, no_bend, no_edge.
std::vector<EvalReport> run_ablation(const Dataset& train, const Dataset& test, const TrainConfig& cfg);

// Evaluates on copies of test where each image (and its ground truth) is moved by
// a seeded uniform offset in [-dx, dx] x [-dy, dy] and rotated by [-dtheta, dtheta] degrees.
EvalReport run_perturbation(const ModelParams& params, const Contour& exemplar, const Dataset& test, double dx,
                            double dy, double dtheta_deg, std::uint64_t seed);

enum class SweepAxis { LambdaPerc, LambdaBend, LambdaEdge, Blocks };
SweepAxis sweep_axis_from_name(const std::string& name);  // lambda1, lambda2, lambda3, blocks
std::vector<EvalReport> run_sweep(const Dataset& train, const Dataset& test, const TrainConfig& cfg, SweepAxis axis,
                                  const std::vector<double>& values);
// Retrains once per exemplar id.
std::vector<EvalReport> run_exemplar_sweep(const Dataset& train, const Dataset& test, const TrainConfig& cfg,
                                           const std::vector<std::string>& exemplar_ids);

// Writes <root>/reports/<suite>/<stamp>/summary.json and per_image.csv.
// Returns the directory written.
std::string write_reports(const std::string& root, const std::string& suite, const std::string& stamp,
                          const std::vector<EvalReport>& reports);
std::string reports_csv(const std::vector<EvalReport>& reports);
nlohmann::json reports_json(const std::string& suite, const std::vector<EvalReport>& reports);

}  // namespace ctn
