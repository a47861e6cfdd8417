#include "ctn/losses.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "ctn/errors.hpp"

namespace ctn {

double tps_kernel(double r) noexcept {
  if (r < 1e-12) return 0.0;
  return r * r * std::log(r);
}

BendingPrecomputed precompute_bending(const Contour& exemplar) {
  const int n = static_cast<int>(exemplar.size());
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n + 3, n + 3);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) l(i, j) = tps_kernel(distance(exemplar[i], exemplar[j]));
    l(i, n) = 1.0;
    l(i, n + 1) = exemplar[i].x;
    l(i, n + 2) = exemplar[i].y;
    l(n, i) = 1.0;
    l(n + 1, i) = exemplar[i].x;
    l(n + 2, i) = exemplar[i].y;
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(l);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-12)) throw Error(Errc::SingularL, "TPS system is numerically singular (rcond " + std::to_string(rcond) + ")");
  const Eigen::MatrixXd inv = lu.inverse();

  BendingPrecomputed pre;
  pre.n = n;
  pre.h.resize(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pre.h[static_cast<std::size_t>(i) * n + j] = 0.5 * (inv(i, j) + inv(j, i));
  pre.source = exemplar.vertices();
  return pre;
}

diff::Tensor contour_tensor(std::span<const Point> pts) {
  diff::Tensor t = diff::Tensor::zeros(static_cast<int>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t.data[2 * i] = pts[i].x;
    t.data[2 * i + 1] = pts[i].y;
  }
  return t;
}

std::vector<Point> tensor_points(std::span<const double> xy) {
  std::vector<Point> out(xy.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {xy[2 * i], xy[2 * i + 1]};
  return out;
}

diff::Tensor contour_features(const FeaturePyramid& pyr, std::span<const Point> contour) {
  const int n = static_cast<int>(contour.size());
  diff::Tensor out = diff::Tensor::zeros(n, pyr.total_channels());
  int off = 0;
  for (const auto& level : pyr.levels) {
    const double s = 1.0 / level.factor;
    for (int i = 0; i < n; ++i)
      bilinear_sample_into(level.map, s * contour[i].x, s * contour[i].y, &out(i, off), nullptr, nullptr);
    off += level.map.channels;
  }
  return out;
}

diff::Value contour_perceptual_loss(const diff::Value& contour, const FeaturePyramid& pyr,
                                    const diff::Value& target_features, FeatureDistance dist) {
  if (target_features.rows() != contour.rows())
    throw Error(Errc::VertexCountMismatch, "contour has " + std::to_string(contour.rows()) +
                                               " vertices, exemplar features " + std::to_string(target_features.rows()));
  if (target_features.cols() != pyr.total_channels())
    throw Error(Errc::PyramidMismatch, "feature channel counts differ");
  std::vector<diff::Value> parts;
  parts.reserve(pyr.levels.size());
  for (const auto& level : pyr.levels)
    parts.push_back(diff::bilinear_gather(level.map, contour, 1.0 / level.factor));
  const diff::Value feats = diff::concat(parts, diff::Axis::Cols);
  const diff::Value delta = diff::sub(feats, target_features);
  if (dist == FeatureDistance::L1) return diff::l1_norm(delta);
  return diff::sum(diff::row_l2_norm(delta));
}

diff::Value contour_perceptual_loss(const diff::Value& contour, const FeaturePyramid& pyr,
                                    const FeaturePyramid& exemplar_pyr, const Contour& exemplar,
                                    FeatureDistance dist) {
  if (static_cast<int>(exemplar.size()) != contour.rows())
    throw Error(Errc::VertexCountMismatch, "contour and exemplar vertex counts differ");
  if (pyr.levels.size() != exemplar_pyr.levels.size())
    throw Error(Errc::PyramidMismatch, "pyramids have different level counts");
  for (std::size_t l = 0; l < pyr.levels.size(); ++l)
    if (pyr.levels[l].factor != exemplar_pyr.levels[l].factor ||
        pyr.levels[l].map.channels != exemplar_pyr.levels[l].map.channels)
      throw Error(Errc::PyramidMismatch, "pyramid level " + std::to_string(l) + " differs");
  const diff::Value target = contour.tape().constant(contour_features(exemplar_pyr, exemplar.vertices()));
  return contour_perceptual_loss(contour, pyr, target, dist);
}

diff::Value contour_bending_loss(const diff::Value& contour, const BendingPrecomputed& pre) {
  if (contour.rows() != pre.n || contour.cols() != 2)
    throw Error(Errc::VertexCountMismatch, "bending loss expects " + std::to_string(pre.n) + " x 2 contour");
  diff::Tape& tape = contour.tape();
  const diff::Value h = tape.parameter(pre.h, pre.n, pre.n, {});
  const diff::Value hc = diff::matmul(h, contour);
  const diff::Value q = diff::sum(diff::mul(contour, hc));
  return diff::clamp_min(diff::scale(q, 1.0 / (8.0 * std::numbers::pi)), 0.0);
}

double bending_quadratic(std::span<const Point> contour, const BendingPrecomputed& pre) {
  if (static_cast<int>(contour.size()) != pre.n) throw Error(Errc::VertexCountMismatch, "bending_quadratic size");
  double acc = 0.0;
  for (int i = 0; i < pre.n; ++i) {
    double hx = 0.0, hy = 0.0;
    for (int j = 0; j < pre.n; ++j) {
      hx += pre.h[static_cast<std::size_t>(i) * pre.n + j] * contour[j].x;
      hy += pre.h[static_cast<std::size_t>(i) * pre.n + j] * contour[j].y;
    }
    acc += contour[i].x * hx + contour[i].y * hy;
  }
  return acc / (8.0 * std::numbers::pi);
}

diff::Value edge_loss(const diff::Value& contour, const FeatureMap& gradient_magnitude) {
  if (gradient_magnitude.channels != 1) throw Error(Errc::ShapeMismatch, "edge loss expects a 1-channel map");
  return diff::scale(diff::mean(diff::bilinear_gather(gradient_magnitude, contour)), -1.0);
}

diff::Value partial_contour_matching_loss(const diff::Value& contour, const Assignment& assignment) {
  diff::Tape& tape = contour.tape();
  if (assignment.empty()) return tape.constant(diff::Tensor::scalar(0.0));
  std::vector<int> rows;
  std::vector<Point> targets;
  rows.reserve(assignment.size());
  for (const auto& a : assignment) {
    if (a.pred_index < 0 || a.pred_index >= contour.rows())
      throw Error(Errc::VertexCountMismatch, "assignment index outside the contour");
    rows.push_back(a.pred_index);
    targets.push_back(a.target);
  }
  const diff::Value picked = diff::gather_rows(contour, std::move(rows));
  const diff::Value delta = diff::sub(picked, tape.constant(contour_tensor(targets)));
  return diff::scale(diff::sum(diff::row_l2_norm(delta)), 1.0 / contour.rows());
}

}  // namespace ctn
