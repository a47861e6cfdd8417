#include "ctn/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "ctn/errors.hpp"

namespace fs = std::filesystem;

namespace ctn {
namespace {

double sample(std::mt19937_64& rng, Range r) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
    throw Error(Errc::InvalidFamilySpec, std::string("empty range for ") + name);
}

struct ShapeParams {
  ShapeFamily family;
  Point center;
  double a, b, rot, exponent, bean_depth;
};

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

// Boundary radius in the shape's own frame at polar angle phi.
double boundary_radius(const ShapeParams& s, double phi) {
  const double e = s.exponent;
  const double r = std::pow(std::pow(std::abs(std::cos(phi) / s.a), e) + std::pow(std::abs(std::sin(phi) / s.b), e),
                            -1.0 / e);
  if (s.family != ShapeFamily::Bean) return r;
  const double d = wrap_angle(phi - 0.5 * std::numbers::pi);
  return r * (1.0 - s.bean_depth * std::exp(-d * d / (2.0 * 0.45 * 0.45)));
}

bool inside(const ShapeParams& s, double x, double y) {
  const double dx = x - s.center.x, dy = y - s.center.y;
  const double c = std::cos(s.rot), sn = std::sin(s.rot);
  const double u = c * dx + sn * dy, v = -sn * dx + c * dy;
  const double rho = std::hypot(u, v);
  return rho <= boundary_radius(s, std::atan2(v, u));
}

std::vector<Point> boundary_polyline(const ShapeParams& s, int samples) {
  std::vector<Point> pts(samples);
  const double c = std::cos(s.rot), sn = std::sin(s.rot);
  for (int k = 0; k < samples; ++k) {
    const double phi = 2.0 * std::numbers::pi * k / samples;
    const double r = boundary_radius(s, phi);
    const double u = r * std::cos(phi), v = r * std::sin(phi);
    pts[k] = {s.center.x + c * u - sn * v, s.center.y + sn * u + c * v};
  }
  return pts;
}

}  // namespace

std::optional<std::size_t> Dataset::find(const std::string& id) const {
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].id == id) return i;
  return std::nullopt;
}

const DataItem& Dataset::item(const std::string& id) const {
  const auto i = find(id);
  if (!i) throw Error(Errc::InvalidArgument, "no item with id " + id);
  return items[*i];
}

const DataItem& Dataset::exemplar() const {
  const auto i = find(exemplar_id);
  if (!i) throw Error(Errc::MissingExemplar, "exemplar '" + exemplar_id + "' is not in the dataset");
  if (!items[*i].contour) throw Error(Errc::MissingExemplar, "exemplar '" + exemplar_id + "' has no contour");
  return items[*i];
}

std::string family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::Ellipse: return "ellipse";
    case ShapeFamily::Superellipse: return "superellipse";
    case ShapeFamily::Bean: return "bean";
  }
  return "superellipse";
}

ShapeFamily family_from_name(const std::string& name) {
  if (name == "ellipse") return ShapeFamily::Ellipse;
  if (name == "superellipse") return ShapeFamily::Superellipse;
  if (name == "bean") return ShapeFamily::Bean;
  throw Error(Errc::InvalidFamilySpec, "unknown family '" + name + "'");
}

namespace {
nlohmann::json range_json(const Range& r) { return {r.lo, r.hi}; }
Range range_from(const nlohmann::json& j, const char* key, Range def) {
  if (!j.contains(key)) return def;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) throw Error(Errc::InvalidFamilySpec, std::string(key) + " must be [lo, hi]");
  return {v[0].get<double>(), v[1].get<double>()};
}
}  // namespace

nlohmann::json to_json(const FamilySpec& f) {
  return {{"family", family_name(f.family)},      {"width", f.width},
          {"height", f.height},                   {"n_vertices", f.n_vertices},
          {"center_jitter", range_json(f.center_jitter)}, {"radius", range_json(f.radius)},
          {"aspect", range_json(f.aspect)},       {"rotation", range_json(f.rotation)},
          {"exponent", range_json(f.exponent)},   {"bean_depth", range_json(f.bean_depth)},
          {"contrast", range_json(f.contrast)},   {"background", range_json(f.background)},
          {"noise", range_json(f.noise)},         {"texture", range_json(f.texture)},
          {"distractors", range_json(f.distractors)}, {"distractor_radius", range_json(f.distractor_radius)},
          {"distractor_contrast", range_json(f.distractor_contrast)},
          {"id_prefix", f.id_prefix}};
}

FamilySpec family_spec_from_json(const nlohmann::json& j) {
  try {
    FamilySpec f;
    if (j.contains("family")) f.family = family_from_name(j.at("family").get<std::string>());
    f.width = j.value("width", f.width);
    f.height = j.value("height", f.height);
    f.n_vertices = j.value("n_vertices", f.n_vertices);
    f.center_jitter = range_from(j, "center_jitter", f.center_jitter);
    f.radius = range_from(j, "radius", f.radius);
    f.aspect = range_from(j, "aspect", f.aspect);
    f.rotation = range_from(j, "rotation", f.rotation);
    f.exponent = range_from(j, "exponent", f.exponent);
    f.bean_depth = range_from(j, "bean_depth", f.bean_depth);
    f.contrast = range_from(j, "contrast", f.contrast);
    f.background = range_from(j, "background", f.background);
    f.noise = range_from(j, "noise", f.noise);
    f.texture = range_from(j, "texture", f.texture);
    f.distractors = range_from(j, "distractors", f.distractors);
    f.distractor_radius = range_from(j, "distractor_radius", f.distractor_radius);
    f.distractor_contrast = range_from(j, "distractor_contrast", f.distractor_contrast);
    f.id_prefix = j.value("id_prefix", f.id_prefix);
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidFamilySpec, e.what());
  }
}

Dataset generate_synthetic(const FamilySpec& spec, int count, std::uint64_t seed) {
  if (count < 2) throw Error(Errc::InvalidFamilySpec, "count must be >= 2");
  if (spec.width < 8 || spec.height < 8 || spec.n_vertices < 3)
    throw Error(Errc::InvalidFamilySpec, "image must be >= 8x8 and n_vertices >= 3");
  check_range(spec.center_jitter, "center_jitter");
  check_range(spec.radius, "radius");
  check_range(spec.aspect, "aspect");
  check_range(spec.rotation, "rotation");
  check_range(spec.exponent, "exponent");
  check_range(spec.bean_depth, "bean_depth");
  check_range(spec.contrast, "contrast");
  check_range(spec.background, "background");
  check_range(spec.noise, "noise");
  check_range(spec.texture, "texture");
  check_range(spec.distractors, "distractors");
  check_range(spec.distractor_radius, "distractor_radius");
  check_range(spec.distractor_contrast, "distractor_contrast");
  if (spec.distractors.lo < 0.0 || spec.distractor_radius.lo <= 0.0)
    throw Error(Errc::InvalidFamilySpec, "distractor count must be >= 0 and radius > 0");
  if (spec.radius.lo <= 1.0 || spec.aspect.lo <= 0.0 || spec.exponent.lo <= 0.0 || spec.noise.lo < 0.0)
    throw Error(Errc::InvalidFamilySpec, "radius, aspect and exponent must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset ds;
  ds.n_vertices = spec.n_vertices;
  const int digits = std::max(3, static_cast<int>(std::to_string(count - 1).size()));
  for (int idx = 0; idx < count; ++idx) {
    ShapeParams s;
    s.family = spec.family;
    s.center = {0.5 * (spec.width - 1) + sample(rng, spec.center_jitter),
                0.5 * (spec.height - 1) + sample(rng, spec.center_jitter)};
    s.a = sample(rng, spec.radius);
    s.b = s.a * sample(rng, spec.aspect);
    s.rot = sample(rng, spec.rotation);
    s.exponent = spec.family == ShapeFamily::Superellipse ? sample(rng, spec.exponent) : 2.0;
    s.bean_depth = spec.family == ShapeFamily::Bean ? sample(rng, spec.bean_depth) : 0.0;
    const double contrast = sample(rng, spec.contrast);
    const double background = sample(rng, spec.background);
    const double noise = sample(rng, spec.noise);
    const double texture = sample(rng, spec.texture);

    // Background texture: a few random plane waves.
    struct Wave { double kx, ky, phase, amp; };
    std::vector<Wave> waves(4);
    for (auto& w : waves) {
      const double freq = std::uniform_real_distribution<double>(0.05, 0.25)(rng);
      const double dir = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
      w = {freq * std::cos(dir), freq * std::sin(dir),
           std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng), 0.25};
    }

    struct Disk { Point c; double r, level; };
    std::vector<Disk> disks;
    const int n_disks = static_cast<int>(std::lround(sample(rng, spec.distractors)));
    for (int d = 0; d < n_disks; ++d) {
      const double phi = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
      const double r = sample(rng, spec.distractor_radius);
      const double rb = boundary_radius(s, phi) + r * std::uniform_real_distribution<double>(0.2, 0.8)(rng);
      const double u = rb * std::cos(phi), v = rb * std::sin(phi);
      const double c = std::cos(s.rot), sn = std::sin(s.rot);
      disks.push_back({{s.center.x + c * u - sn * v, s.center.y + sn * u + c * v}, r,
                       sample(rng, spec.distractor_contrast)});
    }

    ImageGrid img = ImageGrid::filled(spec.height, spec.width, 0.0);
    constexpr int kSuper = 4;
    for (int r = 0; r < spec.height; ++r) {
      for (int c = 0; c < spec.width; ++c) {
        double hits = 0.0;
        for (int sy = 0; sy < kSuper; ++sy)
          for (int sx = 0; sx < kSuper; ++sx) {
            const double x = c - 0.5 + (sx + 0.5) / kSuper, y = r - 0.5 + (sy + 0.5) / kSuper;
            double level = inside(s, x, y) ? 1.0 : 0.0;
            for (const auto& d : disks)
              if (std::hypot(x - d.c.x, y - d.c.y) <= d.r) level = std::max(level, d.level);
            hits += level;
          }
        double tex = 0.0;
        for (const auto& w : waves) tex += w.amp * std::sin(w.kx * c + w.ky * r + w.phase);
        const double coverage = hits / (kSuper * kSuper);
        img.at(r, c) = background * (1.0 + texture * tex) + contrast * coverage;
      }
    }
    for (double& v : img.values) v = std::clamp(v + noise * gauss(rng), 0.0, 1.0);

    char id[64];
    std::snprintf(id, sizeof(id), "%s_%0*d", spec.id_prefix.c_str(), digits, idx);
    const auto poly = boundary_polyline(s, 4000);
    ds.items.push_back(DataItem{id, std::move(img), resample_uniform(poly, spec.n_vertices), std::nullopt});
  }
  ds.exemplar_id = ds.items.front().id;
  return ds;
}

std::string select_exemplar(const Dataset& ds, const EncoderConfig& enc) {
  if (ds.items.empty()) throw Error(Errc::DatasetInvalid, "empty dataset");
  std::vector<std::size_t> order(ds.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ds.items[a].id < ds.items[b].id; });
  if (order.size() == 1) return ds.items[order[0]].id;

  std::vector<std::vector<double>> feats;
  feats.reserve(order.size());
  for (std::size_t i : order) {
    const auto& img = ds.items[i].image;
    if (img.width != ds.items[order[0]].image.width || img.height != ds.items[order[0]].image.height)
      throw Error(Errc::DatasetInvalid, "exemplar selection needs equally sized images");
    feats.push_back(flatten(encode_features(img, enc)));
  }
  const std::size_t n = feats.size();
  std::vector<double> total(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < feats[i].size(); ++k) {
        const double d = feats[i][k] - feats[j][k];
        s += d * d;
      }
      const double dist = std::sqrt(s);
      total[i] += dist;
      total[j] += dist;
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (total[i] < total[best]) best = i;
  return ds.items[order[best]].id;
}

void check_contour_in_image(const Contour& c, const ImageGrid& img, const std::string& id) {
  for (const Point& p : c.vertices())
    if (p.x < -0.5 || p.y < -0.5 || p.x > img.width - 0.5 || p.y > img.height - 0.5)
      throw Error(Errc::ImageContourMismatch, "contour of " + id + " leaves the " + std::to_string(img.width) + "x" +
                                                  std::to_string(img.height) + " image");
}

namespace {

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(Errc::Io, "cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedJson, p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + p.string());
  out << text;
}

}  // namespace

Dataset load_dataset(const std::string& root) {
  const fs::path base(root);
  const fs::path manifest = base / "manifest.json";
  if (!fs::exists(manifest)) throw Error(Errc::MissingExemplar, "no manifest.json under " + root);
  const nlohmann::json m = read_json(manifest);
  if (!m.is_object() || !m.contains("exemplar") || !m["exemplar"].is_string())
    throw Error(Errc::MissingExemplar, "manifest.json has no \"exemplar\" field");
  Dataset ds;
  ds.exemplar_id = m["exemplar"].get<std::string>();
  if (m.contains("n_vertices")) {
    if (!m["n_vertices"].is_number_integer()) throw Error(Errc::MalformedJson, "n_vertices must be an integer");
    ds.n_vertices = m["n_vertices"].get<int>();
  }

  std::vector<fs::path> images;
  if (fs::is_directory(base / "images"))
    for (const auto& e : fs::directory_iterator(base / "images"))
      if (e.is_regular_file() && e.path().extension() == ".pgm") images.push_back(e.path());
  std::sort(images.begin(), images.end());
  for (const auto& p : images) {
    DataItem item;
    item.id = p.stem().string();
    item.image = read_pgm(p.string());
    const fs::path cpath = base / "contours" / (item.id + ".json");
    if (fs::exists(cpath)) {
      try {
        item.contour = contour_from_json(read_json(cpath));
      } catch (const Error& e) {
        if (e.code() == Errc::DegenerateContour) throw Error(Errc::MalformedJson, cpath.string() + ": " + e.what());
        throw;
      }
      check_contour_in_image(*item.contour, item.image, item.id);
    }
    const fs::path kpath = base / "corrections" / (item.id + ".json");
    if (fs::exists(kpath)) item.corrections = corrections_from_json(read_json(kpath));
    ds.items.push_back(std::move(item));
  }
  (void)ds.exemplar();
  return ds;
}

void save_contours(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);
  for (const auto& item : ds.items)
    if (item.contour) write_text(fs::path(dir) / (item.id + ".json"), contour_to_json(*item.contour).dump(2));
}

void save_dataset(const Dataset& ds, const std::string& root) {
  const fs::path base(root);
  fs::create_directories(base / "images");
  for (const auto& item : ds.items) write_pgm((base / "images" / (item.id + ".pgm")).string(), item.image);
  save_contours(ds, (base / "contours").string());
  bool any_corrections = false;
  for (const auto& item : ds.items) any_corrections = any_corrections || item.corrections.has_value();
  if (any_corrections) {
    fs::create_directories(base / "corrections");
    for (const auto& item : ds.items)
      if (item.corrections)
        write_text(base / "corrections" / (item.id + ".json"), corrections_to_json(*item.corrections).dump(2));
  }
  write_text(base / "manifest.json",
             nlohmann::json{{"exemplar", ds.exemplar_id}, {"n_vertices", ds.n_vertices}}.dump(2));
}

}  // namespace ctn
