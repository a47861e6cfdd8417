#pragma once

#include <vector>

#include "ctn/diff.hpp"
#include "ctn/geometry.hpp"
#include "ctn/corrections.hpp"
#include "ctn/imaging.hpp"

namespace ctn {

// TPS radial basis r^2 log r, continuous at 0 with value 0.
double tps_kernel(double r) noexcept;

struct BendingPrecomputed {
  int n = 0;
  std::vector<double> h;  // n x n, row-major: upper-left block of L^-1
  std::vector<Point> source;
};

// Assembles L = [K P; P^T 0] on the exemplar contour and inverts it by LU
// with partial pivoting. Throws SingularL when 1/rcond exceeds 1e12.
BendingPrecomputed precompute_bending(const Contour& exemplar);

enum class FeatureDistance { L1, L2 };

// Features of the exemplar pyramid at the exemplar vertices, levels
// concatenated: N x total_channels.
diff::Tensor contour_features(const FeaturePyramid& pyr, std::span<const Point> contour);

// Sum over vertices of the distance between features sampled at contour (N x 2)
// on pyr and the matching row of target_features.
diff::Value contour_perceptual_loss(const diff::Value& contour, const FeaturePyramid& pyr,
                                    const diff::Value& target_features,
                                    FeatureDistance dist = FeatureDistance::L1);
diff::Value contour_perceptual_loss(const diff::Value& contour, const FeaturePyramid& pyr,
                                    const FeaturePyramid& exemplar_pyr, const Contour& exemplar,
                                    FeatureDistance dist = FeatureDistance::L1);

// max((x^T H x + y^T H y) / (8 pi), 0)
diff::Value contour_bending_loss(const diff::Value& contour, const BendingPrecomputed& pre);
// Unclamped quadratic form, for diagnostics and tests.
double bending_quadratic(std::span<const Point> contour, const BendingPrecomputed& pre);

// -(1/N) sum of gradient magnitude sampled at the vertices.
diff::Value edge_loss(const diff::Value& contour, const FeatureMap& gradient_magnitude);

// (1/N) sum over assigned vertices of the distance to their corrected point.
diff::Value partial_contour_matching_loss(const diff::Value& contour, const Assignment& assignment);

// Contour as an N x 2 tensor of (x, y) rows, and back.
diff::Tensor contour_tensor(std::span<const Point> pts);
std::vector<Point> tensor_points(std::span<const double> xy);

}  // namespace ctn
