#include <doctest.h>

#include <cmath>
#include <random>

#include "ctn/errors.hpp"
#include "ctn/hitl.hpp"
#include "support.hpp"

using namespace ctn;
using ctn::testing::brute_force_correspondence;
using ctn::testing::random_star;

namespace {

std::vector<Point> circle(int n, Point c, double r) {
  std::vector<Point> pts(n);
  for (int i = 0; i < n; ++i)
    pts[i] = {c.x + r * std::cos(2 * M_PI * i / n), c.y + r * std::sin(2 * M_PI * i / n)};
  return pts;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return Errc::Io;
}

bool same(const Assignment& a, const Assignment& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].pred_index != b[i].pred_index || a[i].segment != b[i].segment || a[i].point_index != b[i].point_index ||
        !(a[i].target == b[i].target))
      return false;
  return true;
}

}  // namespace

TEST_CASE("correspondence matches brute force") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> nv(3, 30), nseg(1, 3), npts(1, 8);
  std::uniform_real_distribution<double> coord(0, 60);
  for (int trial = 0; trial < 300; ++trial) {
    const auto pred = random_star(rng, nv(rng), {30, 30}, 5, 25);
    CorrectionSet cs;
    const int segs = nseg(rng);
    for (int s = 0; s < segs; ++s) {
      std::vector<Point> seg;
      const int m = npts(rng);
      for (int k = 0; k < m; ++k) seg.push_back({coord(rng), coord(rng)});
      cs.segments.push_back(seg);
    }
    INFO("trial " << trial);
    CHECK(same(correspond_segments(pred, cs), brute_force_correspondence(pred, cs)));
  }
}

TEST_CASE("correspondence on a circle") {
  const auto pred = circle(12, {0, 0}, 10);
  // Segment hugging vertices 1..3 from outside.
  CorrectionSet cs{"x", {{{11 * std::cos(2 * M_PI / 12), 11 * std::sin(2 * M_PI / 12)},
                          {11 * std::cos(4 * M_PI / 12), 11 * std::sin(4 * M_PI / 12)},
                          {11 * std::cos(6 * M_PI / 12), 11 * std::sin(6 * M_PI / 12)}}}};
  CHECK(correspondence_arc(pred, cs.segments[0]) == std::vector<int>{1, 2, 3});
  const Assignment a = correspond_segments(pred, cs);
  REQUIRE(a.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(a[k].pred_index == k + 1);
    CHECK(a[k].point_index == k);
  }
  // Reversed drawing order walks the arc the other way.
  std::vector<Point> rev(cs.segments[0].rbegin(), cs.segments[0].rend());
  CHECK(correspondence_arc(pred, rev) == std::vector<int>{3, 2, 1});

  // An earlier segment keeps its vertices.
  CorrectionSet two{"x", {cs.segments[0], {{11 * std::cos(4 * M_PI / 12), 11 * std::sin(4 * M_PI / 12)},
                                          {11 * std::cos(8 * M_PI / 12), 11 * std::sin(8 * M_PI / 12)}}}};
  const Assignment b = correspond_segments(pred, two);
  std::vector<int> second;
  for (const auto& e : b)
    if (e.segment == 1) second.push_back(e.pred_index);
  CHECK(second == std::vector<int>{4});

  // Single-point segment claims one vertex.
  CorrectionSet dot{"x", {{{0, 12}}}};
  const Assignment c = correspond_segments(pred, dot);
  REQUIRE(c.size() == 1);
  CHECK(c[0].pred_index == 3);
  CHECK(correspond_segments(pred, CorrectionSet{}).empty());
}

TEST_CASE("simulated corrections") {
  const auto gt = circle(10, {20, 20}, 8);
  auto pred = gt;
  CHECK(simulate_corrections(pred, gt).segments.empty());

  pred[3] = pred[3] + Point{5, 0};
  const CorrectionSet one = simulate_corrections(pred, gt, 3.0, "img");
  CHECK(one.image_id == "img");
  REQUIRE(one.segments.size() == 1);
  CHECK(one.segments[0] == std::vector<Point>{gt[3]});

  // Exactly at the threshold is still correct.
  pred = gt;
  pred[5] = pred[5] + Point{0, 3};
  CHECK(simulate_corrections(pred, gt, 3.0).segments.empty());

  // A run across the wrap point stays one segment, in ring order.
  pred = gt;
  for (int i : {8, 9, 0, 1}) pred[i] = pred[i] + Point{4, 4};
  pred[5] = pred[5] + Point{-4, 0};
  const CorrectionSet wrap = simulate_corrections(pred, gt);
  REQUIRE(wrap.segments.size() == 2);
  std::vector<std::vector<Point>> expect{{gt[5]}, {gt[8], gt[9], gt[0], gt[1]}};
  CHECK(wrap.segments == expect);

  for (auto& p : pred) p = p + Point{10, 0};
  const CorrectionSet all = simulate_corrections(pred, gt);
  REQUIRE(all.segments.size() == 1);
  CHECK(all.segments[0] == gt);

  CHECK(code_of([&] { simulate_corrections(std::vector<Point>(9), gt); }) == Errc::VertexCountMismatch);
}

TEST_CASE("corrections json") {
  const CorrectionSet cs{"img_004", {{{1.5, 2}, {3, 4}}, {{5, 6}, {7, 8}, {9, 10}}}};
  const CorrectionSet back = corrections_from_json(corrections_to_json(cs));
  CHECK(back.image_id == "img_004");
  CHECK(back.segments == cs.segments);

  using nlohmann::json;
  const json bad[] = {
      json::array(),
      json{{"segments", json::array()}},
      json{{"image_id", 3}, {"segments", json::array()}},
      json{{"image_id", "a"}},
      json{{"image_id", "a"}, {"segments", {1, 2}}},
      json{{"image_id", "a"}, {"segments", {{{1, 2}, {3}}}}},
      json{{"image_id", "a"}, {"segments", {{{1, 2}, {"x", 4}}}}},
      json{{"image_id", "a"}, {"segments", {{{1, 2}, {1, 2}}}}},
      json{{"image_id", "a"}, {"segments", {{{1, 2}}}}},
  };
  for (const auto& j : bad) {
    INFO(j.dump());
    CHECK(code_of([&] { corrections_from_json(j); }) == Errc::MalformedJson);
  }
  CHECK(corrections_from_json(json{{"image_id", "a"}, {"segments", {{{1, 2}}}}}, 1).segments.size() == 1);
  CHECK(corrections_from_json(json{{"image_id", "a"}, {"segments", json::array()}}).empty());
}

TEST_CASE("worst-case selection and simulated attachment") {
  FamilySpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.n_vertices = 24;
  spec.radius = {12, 20};
  spec.center_jitter = {-6, 6};
  spec.distractor_radius = {3, 5};
  const Dataset ds = generate_synthetic(spec, 6, 41);
  ModelConfig cfg;
  cfg.n_vertices = 24;
  cfg.blocks = 1;
  cfg.hidden = 8;
  cfg.last_hidden = 4;
  cfg.res_layers = 1;
  const ModelParams params = init_params(cfg, 3);

  // With a zero final layer every prediction is the centered exemplar.
  const Contour init = centered_initial(ds.exemplar_contour(), 64, 64);
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& it : ds.items)
    if (it.id != ds.exemplar_id) ranked.push_back({-hausdorff(init.vertices(), it.contour->vertices()), it.id});
  std::sort(ranked.begin(), ranked.end());

  const auto worst = select_worst(ds, params, 0.25);
  REQUIRE(worst.size() == 2);  // ceil(0.25 * 5)
  CHECK(worst[0] == ranked[0].second);
  CHECK(worst[1] == ranked[1].second);
  CHECK(select_worst(ds, params, 1.0).size() == 5);
  CHECK(select_worst(ds, params, 0.2).size() == 1);
  CHECK(code_of([&] { select_worst(ds, params, 0.0); }) == Errc::InvalidArgument);
  CHECK(code_of([&] { select_worst(ds, params, 1.5); }) == Errc::InvalidArgument);

  const Dataset with = attach_simulated_corrections(ds, params, worst, 3.0);
  for (const auto& it : with.items) {
    const bool picked = std::find(worst.begin(), worst.end(), it.id) != worst.end();
    CHECK(it.corrections.has_value() == picked);
    if (!picked) continue;
    CHECK(it.corrections->image_id == it.id);
    for (const auto& seg : it.corrections->segments)
      for (const Point& p : seg)
        CHECK(std::find(it.contour->vertices().begin(), it.contour->vertices().end(), p) !=
              it.contour->vertices().end());
  }
  CHECK(code_of([&] { attach_simulated_corrections(ds, params, {"nope"}); }) == Errc::InvalidArgument);

  Dataset no_gt = ds;
  no_gt.items[3].contour.reset();
  CHECK(code_of([&] { select_worst(no_gt, params, 0.5); }) == Errc::MissingGroundTruth);
  CHECK(code_of([&] { attach_simulated_corrections(no_gt, params, {no_gt.items[3].id}); }) ==
        Errc::MissingGroundTruth);
}
