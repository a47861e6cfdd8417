#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctn/corrections.hpp"
#include "ctn/geometry.hpp"
#include "ctn/imaging.hpp"

namespace ctn {

struct DataItem {
  std::string id;
  ImageGrid image;
  std::optional<Contour> contour;
  std::optional<CorrectionSet> corrections;
};

struct Dataset {
  std::vector<DataItem> items;
  std::string exemplar_id;
  int n_vertices = 100;

  std::optional<std::size_t> find(const std::string& id) const;
  const DataItem& item(const std::string& id) const;
  // Throws MissingExemplar unless the exemplar exists and carries a contour.
  const DataItem& exemplar() const;
  const Contour& exemplar_contour() const { return *exemplar().contour; }
};

enum class ShapeFamily { Ellipse, Superellipse, Bean };

std::string family_name(ShapeFamily f);
ShapeFamily family_from_name(const std::string& name);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Sampling bounds for one synthetic shape family. One bright star-shaped
// object per image, near the center, on a textured background.
struct FamilySpec {
  ShapeFamily family = ShapeFamily::Superellipse;
  int width = 128;
  int height = 128;
  int n_vertices = 100;
  Range center_jitter{-4.0, 4.0};  // px, per axis
  Range radius{28.0, 36.0};        // semi-major axis, px
  Range aspect{0.62, 0.80};        // semi-minor / semi-major
  Range rotation{-0.3, 0.3};       // radians
  Range exponent{2.0, 3.0};        // superellipse exponent; ellipse forces 2
  Range bean_depth{0.15, 0.30};    // relative indentation depth
  Range contrast{0.35, 0.55};
  Range background{0.15, 0.30};
  Range noise{0.01, 0.03};         // Gaussian pixel noise std
  Range texture{0.05, 0.15};       // multiplicative background texture amplitude
  // Bright disks straddling the object boundary; not part of the ground truth.
  Range distractors{1.0, 2.0};     // count, rounded to nearest
  Range distractor_radius{6.0, 12.0};
  Range distractor_contrast{0.8, 0.95};  // relative to the object contrast
  std::string id_prefix = "img";
};

nlohmann::json to_json(const FamilySpec& f);
FamilySpec family_spec_from_json(const nlohmann::json& j);

// Deterministic per (spec, count, seed). Item 0 is the default exemplar.
Dataset generate_synthetic(const FamilySpec& spec, int count, std::uint64_t seed);

// The item whose flattened feature pyramid has the smallest mean L2 distance
// to every other item's; ties go to the lowest id.
std::string select_exemplar(const Dataset& ds, const EncoderConfig& enc = {});

// Layout: manifest.json, images/<id>.pgm, contours/<id>.json, corrections/<id>.json.
Dataset load_dataset(const std::string& root);
void save_dataset(const Dataset& ds, const std::string& root);
void save_contours(const Dataset& ds, const std::string& dir);

// Throws ImageContourMismatch if any vertex lies outside the image extent.
void check_contour_in_image(const Contour& c, const ImageGrid& img, const std::string& id);

}  // namespace ctn
