#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace ctn {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Point a, Point b) = default;
};

double distance(Point a, Point b) noexcept;

// Shoelace area; positive for counter-clockwise vertex order in a y-up frame.
double signed_area(std::span<const Point> pts) noexcept;
double closed_perimeter(std::span<const Point> pts) noexcept;

// Closed polyline, N >= 3, counter-clockwise, no repeated consecutive vertices.
class Contour {
 public:
  // Validates and normalizes orientation. Reversal keeps vertex 0 in place.
  explicit Contour(std::vector<Point> vertices);

  std::size_t size() const noexcept { return vertices_.size(); }
  const std::vector<Point>& vertices() const noexcept { return vertices_; }
  const Point& operator[](std::size_t i) const { return vertices_[i]; }

  Point centroid() const noexcept;
  Contour translated(Point delta) const;

  friend bool operator==(const Contour&, const Contour&) = default;

 private:
  std::vector<Point> vertices_;
};

// Samples n points at equal spacing along the closed polyline, starting at the
// input's first vertex. Spacing is equalized on the output polygon itself, so
// resampling the result at the same n reproduces it.
Contour resample_uniform(std::span<const Point> polyline, int n);

// Pixel-center grid: cell (c, r) has center (x0 + (c + 0.5) * cell, y0 + (r + 0.5) * cell).
struct RasterGrid {
  double x0 = 0.0;
  double y0 = 0.0;
  double cell = 1.0;
  int cols = 0;
  int rows = 0;

  // Centers on integer pixel coordinates of a width x height image.
  static RasterGrid for_image(int width, int height);
  // Smallest grid of the given cell size covering both contours plus one cell of margin.
  static RasterGrid covering(const Contour& a, const Contour& b, double cell);
};

// Even-odd rule on cell centers; centers on the boundary count as inside.
std::vector<std::uint8_t> rasterize(std::span<const Point> polygon, const RasterGrid& grid);

double polygon_iou(std::span<const Point> a, std::span<const Point> b, const RasterGrid& grid);
double polygon_iou(const Contour& a, const Contour& b, const RasterGrid& grid);

// Symmetric Hausdorff distance between the two vertex sets.
double hausdorff(std::span<const Point> a, std::span<const Point> b);
double hausdorff(const Contour& a, const Contour& b);

nlohmann::json contour_to_json(const Contour& c);
Contour contour_from_json(const nlohmann::json& j);

}  // namespace ctn
