#pragma once

#include <string>
#include <vector>

#include "ctn/geometry.hpp"

namespace ctn {

// Row-major scalar image, intensities nominally in [0, 1].
struct ImageGrid {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  static ImageGrid filled(int height, int width, double v);
  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
  double& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }

  // Throws InvalidArgument unless finite and at least 8 x 8.
  void validate() const;
};

// Multi-channel map stored height x width x channels (channels innermost).
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  const double* pixel(int row, int col) const {
    return data.data() + (static_cast<std::size_t>(row) * width + col) * channels;
  }
};

struct PyramidLevel {
  int factor = 1;
  FeatureMap map;
};

struct FeaturePyramid {
  std::vector<PyramidLevel> levels;
  int total_channels() const;
};

struct EncoderConfig {
  std::vector<int> factors{1, 2, 4, 8};
  int channels = 8;               // leading subset of the filter bank, 1..8
  double derivative_sigma = 1.0;  // in level pixels
  double surround_sigma = 2.0;    // outer Gaussian of the center-surround channel
  double antialias_sigma = 1.0;   // smoothing before each 2x subsample
};

// Coordinates are (x = column, y = row) in the map's own pixel units, pixel
// centers at integers. Out-of-range positions clamp to the border.
struct BilinearSample {
  std::vector<double> value;
  std::vector<double> d_dx;
  std::vector<double> d_dy;
};
BilinearSample bilinear_sample(const FeatureMap& map, Point p);

// Raw form used by the differentiation engine; any of the output pointers may be null.
void bilinear_sample_into(const FeatureMap& map, double x, double y, double* value, double* d_dx,
                          double* d_dy);

// Sampled, normalized Gaussian derivative taps for correlation. Order 1 taps
// give slope 1 on a unit ramp, order 2 give 2 on t^2.
std::vector<double> gaussian_taps(double sigma, int order);

ImageGrid gaussian_smooth(const ImageGrid& img, double sigma);

// ||grad I||_2 after Gaussian smoothing; central differences inside, one-sided at the border.
FeatureMap gradient_magnitude_map(const ImageGrid& img, double sigma);

// Fixed filter bank per level: G, Gx, Gy, Gxx, Gyy, Gxy, center-surround, |grad G|,
// each standardized by its own mean and standard deviation over the level.
FeaturePyramid encode_features(const ImageGrid& img, const EncoderConfig& cfg = {});

// Flattened pyramid, level by level.
std::vector<double> flatten(const FeaturePyramid& pyr);

// Resamples img so that output pixel q shows input content at R^-1 (q - c - t) + c,
// i.e. the content is rotated by angle (radians) about the image center and then
// shifted by (dx, dy). Bilinear, border clamp.
ImageGrid rigid_transform(const ImageGrid& img, double dx, double dy, double angle);
Point rigid_transform_point(Point p, int width, int height, double dx, double dy, double angle);

// Binary PGM (P5), 8- or 16-bit. Loaded intensities are divided by maxval.
ImageGrid read_pgm(const std::string& path);
void write_pgm(const std::string& path, const ImageGrid& img, int maxval = 65535);

// 8-bit grayscale PNG, intensities clamped to [0, 1].
std::string encode_png(const ImageGrid& img);

}  // namespace ctn
