#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "ctn/data.hpp"
#include "ctn/errors.hpp"
#include "support.hpp"

using namespace ctn;
using ctn::testing::TempDir;

namespace {

FamilySpec small_spec() {
  FamilySpec f;
  f.width = 64;
  f.height = 64;
  f.n_vertices = 40;
  f.radius = {14, 18};
  f.distractor_radius = {3, 6};
  return f;
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

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  const FamilySpec spec = small_spec();
  const Dataset a = generate_synthetic(spec, 4, 7);
  const Dataset b = generate_synthetic(spec, 4, 7);
  const Dataset c = generate_synthetic(spec, 4, 8);
  REQUIRE(a.items.size() == 4);
  CHECK(a.exemplar_id == "img_000");
  CHECK(a.items[3].id == "img_003");
  for (int i = 0; i < 4; ++i) {
    CHECK(a.items[i].image.values == b.items[i].image.values);
    CHECK(a.items[i].contour->vertices() == b.items[i].contour->vertices());
    CHECK(a.items[i].image.values != c.items[i].image.values);
    CHECK(a.items[i].contour->size() == 40u);
    CHECK(a.items[i].image.width == 64);
    for (double v : a.items[i].image.values) CHECK((v >= 0.0 && v <= 1.0));
  }
  // Items within one dataset differ from each other.
  CHECK(a.items[0].image.values != a.items[1].image.values);
  CHECK(generate_synthetic(spec, 1001, 1).items.back().id == "img_1000");
}

TEST_CASE("ellipse ground truth sits on the analytic boundary") {
  FamilySpec spec;
  spec.family = ShapeFamily::Ellipse;
  spec.center_jitter = {0, 0};
  spec.radius = {30, 30};
  spec.aspect = {0.5, 0.5};
  spec.rotation = {0.4, 0.4};
  spec.distractors = {0, 0};
  const Dataset ds = generate_synthetic(spec, 2, 3);
  const Point c{63.5, 63.5};
  const double a = 30, b = 15, rot = 0.4;
  for (const Point& p : ds.items[0].contour->vertices()) {
    // Distance to a dense sampling of the exact ellipse.
    double best = 1e9;
    for (int k = 0; k < 20000; ++k) {
      const double t = 2.0 * std::numbers::pi * k / 20000;
      const double u = a * std::cos(t), v = b * std::sin(t);
      const Point q{c.x + std::cos(rot) * u - std::sin(rot) * v, c.y + std::sin(rot) * u + std::cos(rot) * v};
      best = std::min(best, distance(p, q));
    }
    CHECK(best <= 0.5);
  }
  // The object is bright inside and dark outside.
  const ImageGrid& img = ds.items[0].image;
  CHECK(img.at(63, 63) > img.at(5, 5) + 0.2);
  // Equal chords.
  const auto& v = ds.items[0].contour->vertices();
  double lo = 1e9, hi = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = distance(v[i], v[(i + 1) % v.size()]);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  CHECK(hi - lo < 1e-6);
}

TEST_CASE("every family renders") {
  for (ShapeFamily f : {ShapeFamily::Ellipse, ShapeFamily::Superellipse, ShapeFamily::Bean}) {
    FamilySpec spec = small_spec();
    spec.family = f;
    const Dataset ds = generate_synthetic(spec, 3, 5);
    CHECK(ds.items.size() == 3);
    CHECK(family_from_name(family_name(f)) == f);
    for (const auto& it : ds.items) CHECK_NOTHROW(check_contour_in_image(*it.contour, it.image, it.id));
  }
  CHECK(code_of([] { family_from_name("blob"); }) == Errc::InvalidFamilySpec);
}

TEST_CASE("family spec validation and json") {
  FamilySpec spec = small_spec();
  spec.family = ShapeFamily::Bean;
  spec.noise = {0.0, 0.02};
  const FamilySpec back = family_spec_from_json(to_json(spec));
  CHECK(to_json(back) == to_json(spec));
  CHECK(family_spec_from_json(nlohmann::json::object()).width == 128);

  FamilySpec bad = small_spec();
  bad.radius = {5, 2};
  CHECK(code_of([&] { generate_synthetic(bad, 3, 1); }) == Errc::InvalidFamilySpec);
  bad = small_spec();
  bad.distractor_radius = {0, 1};
  CHECK(code_of([&] { generate_synthetic(bad, 3, 1); }) == Errc::InvalidFamilySpec);
  CHECK(code_of([&] { generate_synthetic(small_spec(), 1, 1); }) == Errc::InvalidFamilySpec);
  CHECK(code_of([] { family_spec_from_json({{"radius", {1, 2, 3}}}); }) == Errc::InvalidFamilySpec);
  CHECK(code_of([] { family_spec_from_json({{"width", "wide"}}); }) == Errc::InvalidFamilySpec);
}

TEST_CASE("exemplar selection") {
  const Dataset base = generate_synthetic(small_spec(), 5, 11);
  const std::string chosen = select_exemplar(base);
  CHECK(base.find(chosen).has_value());

  // Four identical images outvote the rest; the lowest id among them wins.
  Dataset dup = base;
  for (int k = 0; k < 3; ++k) {
    DataItem copy = base.items[2];
    copy.id = "zz_copy" + std::to_string(k);
    dup.items.push_back(copy);
  }
  const std::string winner = select_exemplar(dup);
  CHECK(winner == base.items[2].id);

  // Identical images tie; lowest id wins.
  Dataset same;
  for (const char* id : {"c", "a", "b"}) same.items.push_back({id, base.items[0].image, std::nullopt, std::nullopt});
  CHECK(select_exemplar(same) == "a");

  // Input order does not matter.
  Dataset rev = base;
  std::reverse(rev.items.begin(), rev.items.end());
  CHECK(select_exemplar(rev) == chosen);

  CHECK(code_of([] { select_exemplar(Dataset{}); }) == Errc::DatasetInvalid);
}

TEST_CASE("dataset save and load") {
  TempDir dir("data");
  Dataset ds = generate_synthetic(small_spec(), 3, 13);
  ds.exemplar_id = "img_001";
  ds.items[2].contour.reset();
  ds.items[0].corrections = CorrectionSet{"img_000", {{{1, 2}, {3, 4}}}};
  save_dataset(ds, dir.str());
  const Dataset back = load_dataset(dir.str());
  CHECK(back.exemplar_id == "img_001");
  CHECK(back.n_vertices == 40);
  REQUIRE(back.items.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.items[i].id == ds.items[i].id);
    for (std::size_t k = 0; k < ds.items[i].image.values.size(); ++k)
      CHECK(std::abs(back.items[i].image.values[k] - ds.items[i].image.values[k]) <= 0.5 / 65535 + 1e-15);
  }
  CHECK(back.items[1].contour->vertices() == ds.items[1].contour->vertices());
  CHECK_FALSE(back.items[2].contour.has_value());
  REQUIRE(back.items[0].corrections.has_value());
  CHECK(back.items[0].corrections->segments[0][1] == Point{3, 4});
  CHECK(&back.exemplar() == &back.items[1]);
}

TEST_CASE("dataset errors") {
  TempDir dir("data_err");
  const std::filesystem::path root = dir.path;
  CHECK(code_of([&] { load_dataset(root.string()); }) == Errc::MissingExemplar);

  Dataset ds = generate_synthetic(small_spec(), 2, 17);
  save_dataset(ds, root.string());
  write(root / "manifest.json", R"({"n_vertices": 40})");
  CHECK(code_of([&] { load_dataset(root.string()); }) == Errc::MissingExemplar);
  write(root / "manifest.json", R"({"exemplar": "img_999"})");
  CHECK(code_of([&] { load_dataset(root.string()); }) == Errc::MissingExemplar);
  write(root / "manifest.json", R"({"exemplar": "img_000"})");
  CHECK_NOTHROW(load_dataset(root.string()));

  // Exemplar without a contour.
  std::filesystem::remove(root / "contours" / "img_000.json");
  CHECK(code_of([&] { load_dataset(root.string()); }) == Errc::MissingExemplar);
  save_dataset(ds, root.string());

  write(root / "contours" / "img_001.json", R"({"vertices": [[1, 1], [500, 1], [500, 30]]})");
  CHECK(code_of([&] { load_dataset(root.string()); }) == Errc::ImageContourMismatch);
  write(root / "contours" / "img_001.json", R"({"vertices": [[1, 1], [2, 2], [3, 3]]})");
  CHECK(code_of([&] { load_dataset(root.string()); }) == Errc::MalformedJson);
  write(root / "contours" / "img_001.json", "{oops");
  CHECK(code_of([&] { load_dataset(root.string()); }) == Errc::MalformedJson);
  save_dataset(ds, root.string());
  std::filesystem::create_directories(root / "corrections");
  write(root / "corrections" / "img_001.json", R"({"image_id": "img_001", "segments": [[[1, 2]]]})");
  CHECK(code_of([&] { load_dataset(root.string()); }) == Errc::MalformedJson);

  CHECK(code_of([&] { ds.item("nope"); }) == Errc::InvalidArgument);
}
