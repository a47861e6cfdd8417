#include "ctn/imaging.hpp"

#include <algorithm>
#include <cmath>

#include "ctn/errors.hpp"
#include "ctn/simd/kernels.hpp"

namespace ctn {
namespace {

int taps_radius(double sigma) { return std::max(1, static_cast<int>(std::ceil(3.0 * sigma))); }

// Separable correlation with clamp-to-edge: row_taps along x, col_taps along y.
std::vector<double> separable(const std::vector<double>& src, int h, int w,
                              const std::vector<double>& row_taps,
                              const std::vector<double>& col_taps) {
  const auto& k = simd::kernels();
  std::vector<double> tmp(src.size()), out(src.size());
  k.conv_rows(src.data(), tmp.data(), h, w, row_taps.data(), static_cast<int>(row_taps.size() / 2));
  k.conv_cols(tmp.data(), out.data(), h, w, col_taps.data(), static_cast<int>(col_taps.size() / 2));
  return out;
}

std::vector<double> subsample2(const std::vector<double>& src, int h, int w, int& oh, int& ow) {
  oh = (h + 1) / 2;
  ow = (w + 1) / 2;
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c)
      out[static_cast<std::size_t>(r) * ow + c] = src[static_cast<std::size_t>(2 * r) * w + 2 * c];
  return out;
}

void standardize(std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  double sd = std::sqrt(var / static_cast<double>(v.size()));
  if (!(sd > 1e-12 * (1.0 + std::abs(mean)))) sd = 1.0;
  for (double& x : v) x = (x - mean) / sd;
}

}  // namespace

ImageGrid ImageGrid::filled(int height, int width, double v) {
  return ImageGrid{height, width, std::vector<double>(static_cast<std::size_t>(height) * width, v)};
}

void ImageGrid::validate() const {
  if (height < 8 || width < 8) throw Error(Errc::InvalidArgument, "image must be at least 8x8");
  if (values.size() != static_cast<std::size_t>(height) * width)
    throw Error(Errc::InvalidArgument, "image buffer size mismatch");
  for (double v : values)
    if (!std::isfinite(v)) throw Error(Errc::InvalidArgument, "non-finite intensity");
}

int FeaturePyramid::total_channels() const {
  int n = 0;
  for (const auto& l : levels) n += l.map.channels;
  return n;
}

void bilinear_sample_into(const FeatureMap& map, double x, double y, double* value, double* d_dx,
                          double* d_dy) {
  const int w = map.width, h = map.height, nc = map.channels;
  const double xc = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const double yc = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(std::floor(xc)), w - 1);
  const int y0 = std::min(static_cast<int>(std::floor(yc)), h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = xc - x0, fy = yc - y0;
  const double* v00 = map.pixel(y0, x0);
  const double* v01 = map.pixel(y0, x1);
  const double* v10 = map.pixel(y1, x0);
  const double* v11 = map.pixel(y1, x1);
  // Clamped coordinates have zero derivative outside the map.
  const double gx = (x >= 0.0 && x <= w - 1) ? 1.0 : 0.0;
  const double gy = (y >= 0.0 && y <= h - 1) ? 1.0 : 0.0;
  for (int c = 0; c < nc; ++c) {
    const double top = v00[c] + fx * (v01[c] - v00[c]);
    const double bot = v10[c] + fx * (v11[c] - v10[c]);
    if (value) value[c] = top + fy * (bot - top);
    if (d_dx) d_dx[c] = gx * ((1.0 - fy) * (v01[c] - v00[c]) + fy * (v11[c] - v10[c]));
    if (d_dy) d_dy[c] = gy * (bot - top);
  }
}

BilinearSample bilinear_sample(const FeatureMap& map, Point p) {
  if (map.channels <= 0 || map.width <= 0 || map.height <= 0)
    throw Error(Errc::InvalidArgument, "empty feature map");
  BilinearSample s;
  s.value.resize(map.channels);
  s.d_dx.resize(map.channels);
  s.d_dy.resize(map.channels);
  bilinear_sample_into(map, p.x, p.y, s.value.data(), s.d_dx.data(), s.d_dy.data());
  return s;
}

std::vector<double> gaussian_taps(double sigma, int order) {
  const int r = taps_radius(sigma);
  std::vector<double> g(2 * r + 1);
  for (int t = -r; t <= r; ++t) g[t + r] = std::exp(-0.5 * t * t / (sigma * sigma));
  double sum = 0.0;
  for (double v : g) sum += v;
  if (order == 0) {
    for (double& v : g) v /= sum;
    return g;
  }
  std::vector<double> taps(g.size());
  if (order == 1) {
    double norm = 0.0;
    for (int t = -r; t <= r; ++t) norm += t * t * g[t + r];
    for (int t = -r; t <= r; ++t) taps[t + r] = t * g[t + r] / norm;
    return taps;
  }
  if (order == 2) {
    double m2 = 0.0;
    for (int t = -r; t <= r; ++t) m2 += t * t * g[t + r];
    m2 /= sum;
    for (int t = -r; t <= r; ++t) taps[t + r] = (t * t - m2) * g[t + r];
    double norm = 0.0;
    for (int t = -r; t <= r; ++t) norm += 0.5 * t * t * taps[t + r];
    for (double& v : taps) v /= norm;
    return taps;
  }
  throw Error(Errc::InvalidArgument, "derivative order must be 0, 1 or 2");
}

ImageGrid gaussian_smooth(const ImageGrid& img, double sigma) {
  if (sigma < 0.0) throw Error(Errc::InvalidArgument, "sigma must be >= 0");
  if (sigma == 0.0) return img;
  const auto g = gaussian_taps(sigma, 0);
  return ImageGrid{img.height, img.width, separable(img.values, img.height, img.width, g, g)};
}

FeatureMap gradient_magnitude_map(const ImageGrid& img, double sigma) {
  const ImageGrid s = gaussian_smooth(img, sigma);
  const int h = s.height, w = s.width;
  FeatureMap out{h, w, 1, std::vector<double>(static_cast<std::size_t>(h) * w)};
  auto diff = [](const ImageGrid& im, int r0, int c0, int r1, int c1, double span) {
    return (im.at(r1, c1) - im.at(r0, c0)) / span;
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double dx = 0.0, dy = 0.0;
      if (w > 1) {
        if (c == 0) dx = diff(s, r, 0, r, 1, 1.0);
        else if (c == w - 1) dx = diff(s, r, w - 2, r, w - 1, 1.0);
        else dx = diff(s, r, c - 1, r, c + 1, 2.0);
      }
      if (h > 1) {
        if (r == 0) dy = diff(s, 0, c, 1, c, 1.0);
        else if (r == h - 1) dy = diff(s, h - 2, c, h - 1, c, 1.0);
        else dy = diff(s, r - 1, c, r + 1, c, 2.0);
      }
      out.data[static_cast<std::size_t>(r) * w + c] = std::hypot(dx, dy);
    }
  }
  return out;
}

FeaturePyramid encode_features(const ImageGrid& img, const EncoderConfig& cfg) {
  img.validate();
  if (cfg.channels < 1 || cfg.channels > 8)
    throw Error(Errc::InvalidArgument, "encoder channels must be in 1..8");
  const auto g0 = gaussian_taps(cfg.derivative_sigma, 0);
  const auto g1 = gaussian_taps(cfg.derivative_sigma, 1);
  const auto g2 = gaussian_taps(cfg.derivative_sigma, 2);
  const auto gs = gaussian_taps(cfg.surround_sigma, 0);
  const auto aa = gaussian_taps(cfg.antialias_sigma, 0);

  FeaturePyramid pyr;
  std::vector<double> level = img.values;
  int h = img.height, w = img.width, factor = 1;
  for (int target : cfg.factors) {
    if (target < factor || (target & (target - 1)) != 0)
      throw Error(Errc::InvalidArgument, "pyramid factors must be ascending powers of two");
    while (factor < target) {
      auto smooth = separable(level, h, w, aa, aa);
      int oh = 0, ow = 0;
      level = subsample2(smooth, h, w, oh, ow);
      h = oh;
      w = ow;
      factor *= 2;
    }
    if (h < 4 || w < 4)
      throw Error(Errc::ImageTooSmall, "level with factor " + std::to_string(factor) + " is smaller than 4x4");

    std::vector<std::vector<double>> bank;
    bank.reserve(8);
    bank.push_back(separable(level, h, w, g0, g0));  // G
    bank.push_back(separable(level, h, w, g1, g0));  // Gx
    bank.push_back(separable(level, h, w, g0, g1));  // Gy
    bank.push_back(separable(level, h, w, g2, g0));  // Gxx
    bank.push_back(separable(level, h, w, g0, g2));  // Gyy
    bank.push_back(separable(level, h, w, g1, g1));  // Gxy
    {
      auto surround = separable(level, h, w, gs, gs);
      std::vector<double> dog(bank[0].size());
      for (std::size_t i = 0; i < dog.size(); ++i) dog[i] = bank[0][i] - surround[i];
      bank.push_back(std::move(dog));
    }
    {
      std::vector<double> mag(bank[0].size());
      for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::hypot(bank[1][i], bank[2][i]);
      bank.push_back(std::move(mag));
    }
    bank.resize(cfg.channels);
    for (auto& ch : bank) standardize(ch);

    FeatureMap map{h, w, cfg.channels, std::vector<double>(static_cast<std::size_t>(h) * w * cfg.channels)};
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i)
      for (int c = 0; c < cfg.channels; ++c) map.data[i * cfg.channels + c] = bank[c][i];
    pyr.levels.push_back({factor, std::move(map)});
  }
  return pyr;
}

std::vector<double> flatten(const FeaturePyramid& pyr) {
  std::vector<double> out;
  for (const auto& l : pyr.levels) out.insert(out.end(), l.map.data.begin(), l.map.data.end());
  return out;
}

Point rigid_transform_point(Point p, int width, int height, double dx, double dy, double angle) {
  const Point c{0.5 * (width - 1), 0.5 * (height - 1)};
  const double cs = std::cos(angle), sn = std::sin(angle);
  const Point d = p - c;
  return Point{cs * d.x - sn * d.y + c.x + dx, sn * d.x + cs * d.y + c.y + dy};
}

ImageGrid rigid_transform(const ImageGrid& img, double dx, double dy, double angle) {
  if (dx == 0.0 && dy == 0.0 && angle == 0.0) return img;
  const FeatureMap src{img.height, img.width, 1, img.values};
  ImageGrid out = ImageGrid::filled(img.height, img.width, 0.0);
  const Point c{0.5 * (img.width - 1), 0.5 * (img.height - 1)};
  const double cs = std::cos(angle), sn = std::sin(angle);
  for (int r = 0; r < img.height; ++r) {
    for (int col = 0; col < img.width; ++col) {
      const Point d = Point{static_cast<double>(col), static_cast<double>(r)} - c - Point{dx, dy};
      const double sx = cs * d.x + sn * d.y + c.x;
      const double sy = -sn * d.x + cs * d.y + c.y;
      bilinear_sample_into(src, sx, sy, &out.at(r, col), nullptr, nullptr);
    }
  }
  return out;
}

}  // namespace ctn
