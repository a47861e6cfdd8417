#include "ctn/hitl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctn/errors.hpp"

namespace ctn {
namespace {

int nearest_index(std::span<const Point> pts, Point q) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = distance(pts[i], q);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double distance_to_set(Point p, std::span<const Point> set) {
  double best = std::numeric_limits<double>::infinity();
  for (const Point& q : set) best = std::min(best, distance(p, q));
  return best;
}

std::vector<int> walk(int from, int to, int n, int dir) {
  std::vector<int> arc{from};
  for (int i = from; i != to;) {
    i = ((i + dir) % n + n) % n;
    arc.push_back(i);
  }
  return arc;
}

}  // namespace

CorrectionSet corrections_from_json(const nlohmann::json& j, std::size_t min_points) {
  if (!j.is_object()) throw Error(Errc::MalformedJson, "correction set must be an object");
  if (!j.contains("image_id") || !j["image_id"].is_string())
    throw Error(Errc::MalformedJson, "\"image_id\" must be a string");
  if (!j.contains("segments") || !j["segments"].is_array())
    throw Error(Errc::MalformedJson, "\"segments\" must be an array");
  CorrectionSet cs;
  cs.image_id = j["image_id"].get<std::string>();
  for (const auto& seg : j["segments"]) {
    if (!seg.is_array()) throw Error(Errc::MalformedJson, "segment must be an array of points");
    std::vector<Point> pts;
    for (const auto& v : seg) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw Error(Errc::MalformedJson, "segment point must be [x, y]");
      const Point p{v[0].get<double>(), v[1].get<double>()};
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error(Errc::MalformedJson, "non-finite point");
      pts.push_back(p);
    }
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      bool seen = false;
      for (std::size_t k = 0; k < i && !seen; ++k) seen = pts[k] == pts[i];
      distinct += seen ? 0 : 1;
    }
    if (distinct < min_points)
      throw Error(Errc::MalformedJson, "segment has fewer than " + std::to_string(min_points) + " distinct points");
    cs.segments.push_back(std::move(pts));
  }
  return cs;
}

nlohmann::json corrections_to_json(const CorrectionSet& cs) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& seg : cs.segments) {
    nlohmann::json s = nlohmann::json::array();
    for (const Point& p : seg) s.push_back({p.x, p.y});
    segs.push_back(std::move(s));
  }
  return {{"image_id", cs.image_id}, {"segments", std::move(segs)}};
}

std::vector<int> correspondence_arc(std::span<const Point> predicted, std::span<const Point> segment) {
  if (predicted.empty() || segment.empty()) return {};
  const int n = static_cast<int>(predicted.size());
  const int a = nearest_index(predicted, segment.front());
  const int b = nearest_index(predicted, segment.back());
  if (a == b) return {a};
  auto fwd = walk(a, b, n, +1);
  auto bwd = walk(a, b, n, -1);
  auto mean_dist = [&](const std::vector<int>& arc) {
    double s = 0.0;
    for (int i : arc) s += distance_to_set(predicted[i], segment);
    return s / static_cast<double>(arc.size());
  };
  const double df = mean_dist(fwd), db = mean_dist(bwd);
  if (std::abs(df - db) <= 1e-12 * std::max(1.0, std::max(df, db)))
    return bwd.size() < fwd.size() ? bwd : fwd;
  return df < db ? fwd : bwd;
}

Assignment correspond_segments(std::span<const Point> predicted, const CorrectionSet& corrections) {
  Assignment out;
  std::vector<char> claimed(predicted.size(), 0);
  for (std::size_t s = 0; s < corrections.segments.size(); ++s) {
    const auto& seg = corrections.segments[s];
    if (seg.empty()) continue;
    for (int i : correspondence_arc(predicted, seg)) {
      if (claimed[i]) continue;
      claimed[i] = 1;
      const int k = nearest_index(seg, predicted[i]);
      out.push_back({i, static_cast<int>(s), k, seg[k]});
    }
  }
  return out;
}

CorrectionSet simulate_corrections(std::span<const Point> pred, std::span<const Point> gt,
                                   double threshold, const std::string& image_id) {
  if (pred.size() != gt.size())
    throw Error(Errc::VertexCountMismatch, "prediction and ground truth vertex counts differ");
  CorrectionSet cs;
  cs.image_id = image_id;
  const int n = static_cast<int>(pred.size());
  if (n == 0) return cs;
  std::vector<char> wrong(n);
  for (int i = 0; i < n; ++i) wrong[i] = distance(pred[i], gt[i]) > threshold;
  const int count = static_cast<int>(std::count(wrong.begin(), wrong.end(), 1));
  if (count == 0) return cs;
  if (count == n) {
    cs.segments.emplace_back(gt.begin(), gt.end());
    return cs;
  }
  // Start scanning just after a correct vertex so no run is split by the wrap.
  int start = 0;
  while (wrong[start]) ++start;
  std::vector<Point> run;
  for (int k = 1; k <= n; ++k) {
    const int i = (start + k) % n;
    if (wrong[i]) {
      run.push_back(gt[i]);
    } else if (!run.empty()) {
      cs.segments.push_back(std::move(run));
      run.clear();
    }
  }
  return cs;
}

std::vector<std::string> select_worst(const Dataset& ds, const ModelParams& params, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(Errc::InvalidArgument, "fraction must be in (0, 1]");
  const Contour& exemplar = ds.exemplar_contour();
  std::vector<std::pair<double, std::string>> scored;
  for (const DataItem& it : ds.items) {
    if (it.id == ds.exemplar_id) continue;
    if (!it.contour) throw Error(Errc::MissingGroundTruth, "no ground truth for " + it.id);
    const auto pred = predict(params, it.image, exemplar);
    scored.emplace_back(hausdorff(pred.contour, it.contour->vertices()), it.id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(scored.size()) - 1e-9));
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) ids.push_back(scored[i].second);
  return ids;
}

Dataset attach_simulated_corrections(const Dataset& ds, const ModelParams& params,
                                     const std::vector<std::string>& ids, double threshold) {
  Dataset out = ds;
  const Contour& exemplar = ds.exemplar_contour();
  for (const std::string& id : ids) {
    DataItem* it = nullptr;
    for (auto& candidate : out.items)
      if (candidate.id == id) it = &candidate;
    if (!it) throw Error(Errc::InvalidArgument, "unknown image id " + id);
    if (!it->contour) throw Error(Errc::MissingGroundTruth, "no ground truth for " + id);
    const auto pred = predict(params, it->image, exemplar);
    it->corrections = simulate_corrections(pred.contour, it->contour->vertices(), threshold, id);
  }
  return out;
}

}  // namespace ctn
