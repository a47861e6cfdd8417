#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctn/geometry.hpp"

namespace ctn {

// Annotator-drawn partial contours for one image. Each segment is an open,
// ordered polyline; segments need not cover the whole boundary.
struct CorrectionSet {
  std::string image_id;
  std::vector<std::vector<Point>> segments;

  bool empty() const noexcept { return segments.empty(); }
};

// Throws MalformedJson on schema violations or a segment with fewer than
// min_points distinct points.
CorrectionSet corrections_from_json(const nlohmann::json& j, std::size_t min_points = 2);
nlohmann::json corrections_to_json(const CorrectionSet& cs);

// One predicted vertex paired with the corrected point it is pulled towards.
struct PointAssignment {
  int pred_index = 0;
  int segment = 0;
  int point_index = 0;
  Point target;
};
using Assignment = std::vector<PointAssignment>;

// For each segment: the predicted vertices nearest its start and end bound an
// arc of the ring (of the two arcs, the one closer to the segment on average,
// shorter on ties); every vertex on that arc is assigned its nearest segment
// point. Vertices already claimed by an earlier segment keep that claim.
// Entries are ordered by segment, then along the arc.
Assignment correspond_segments(std::span<const Point> predicted, const CorrectionSet& corrections);

// The chosen arc for one segment, as predicted indices from the start-nearest
// to the end-nearest vertex.
std::vector<int> correspondence_arc(std::span<const Point> predicted, std::span<const Point> segment);

// Marks vertex i wrong when |pred_i - gt_i| > threshold and emits every maximal
// cyclic run of wrong vertices as one segment of ground-truth points.
CorrectionSet simulate_corrections(std::span<const Point> pred, std::span<const Point> gt,
                                   double threshold = 3.0, const std::string& image_id = {});

}  // namespace ctn
