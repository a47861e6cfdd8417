#include "ctn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "ctn/errors.hpp"

namespace ctn {
namespace {

constexpr double kMinSpacing = 1e-9;

std::vector<Point> drop_repeats(std::span<const Point> in) {
  std::vector<Point> out;
  out.reserve(in.size());
  for (const Point& p : in) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw Error(Errc::DegenerateContour, "non-finite vertex");
    if (out.empty() || distance(out.back(), p) > kMinSpacing) out.push_back(p);
  }
  while (out.size() > 1 && distance(out.back(), out.front()) <= kMinSpacing) out.pop_back();
  return out;
}

void make_ccw(std::vector<Point>& pts) {
  if (signed_area(pts) < 0.0) std::reverse(pts.begin() + 1, pts.end());
}

// Closed polyline parameterized by arc length.
struct ArcPath {
  std::span<const Point> pts;
  std::vector<double> cum;  // cum[i] = arc length at pts[i]; cum[m] = total

  explicit ArcPath(std::span<const Point> p) : pts(p), cum(p.size() + 1, 0.0) {
    for (std::size_t i = 0; i < p.size(); ++i) cum[i + 1] = cum[i] + distance(p[i], p[(i + 1) % p.size()]);
  }
  double total() const { return cum.back(); }

  std::size_t segment(double s) const {
    const auto it = std::upper_bound(cum.begin(), cum.end(), s);
    const auto k = static_cast<std::ptrdiff_t>(it - cum.begin()) - 1;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(pts.size()) - 1));
  }
  Point at(double s) const {
    const std::size_t k = segment(s);
    const Point a = pts[k], b = pts[(k + 1) % pts.size()];
    return a + ((s - cum[k]) / (cum[k + 1] - cum[k])) * (b - a);
  }
  Point tangent(double s) const {
    const std::size_t k = segment(s);
    return (1.0 / (cum[k + 1] - cum[k])) * (pts[(k + 1) % pts.size()] - pts[k]);
  }

  // Arc positions of n chords of length d from pts[0], each ending at the first
  // point forward whose distance from the chord start reaches d. Returns the
  // arc length after n chords (infinite if a chord never reaches d).
  double walk(double d, int n, std::vector<double>* arcs = nullptr) const {
    const std::size_t m = pts.size();
    std::size_t seg = 0;
    double u = 0.0, arc = 0.0;
    Point p = pts[0];
    if (arcs) arcs->assign(1, 0.0);
    for (int k = 0; k < n; ++k) {
      std::size_t walked = 0;
      for (;;) {
        const Point a = pts[seg % m], b = pts[(seg + 1) % m];
        const Point ab = b - a, ap = a - p;
        const double len2 = ab.x * ab.x + ab.y * ab.y;
        // |a + t ab - p|^2 = d^2
        const double qb = ap.x * ab.x + ap.y * ab.y, qc = ap.x * ap.x + ap.y * ap.y - d * d;
        const double disc = qb * qb - len2 * qc;
        double hit = -1.0;
        if (disc >= 0.0) {
          const double r = std::sqrt(disc);
          for (double t : {(-qb - r) / len2, (-qb + r) / len2})
            if (t >= u && t <= 1.0) {
              hit = t;
              break;
            }
        }
        if (hit >= 0.0) {
          arc += (hit - u) * std::sqrt(len2);
          u = hit;
          p = a + hit * ab;
          break;
        }
        arc += (1.0 - u) * std::sqrt(len2);
        u = 0.0;
        ++seg;
        if (++walked > 2 * m) return std::numeric_limits<double>::infinity();
      }
      if (arcs && k + 1 < n) arcs->push_back(arc);
    }
    return arc;
  }
};

// Newton on the arc positions s_1..s_{n-1} and the chord length d so that
// |c(s_{k+1}) - c(s_k)| = d for every k, with s_0 = 0 and s_n = total.
// The Jacobian is bidiagonal plus the d column, so each step is a forward
// elimination. Returns the best iterate.
double equalize_chords(const ArcPath& path, std::vector<double>& s, double& d) {
  const int n = static_cast<int>(s.size());
  const double total = path.total();
  auto residual = [&](const std::vector<double>& sv, double dv, std::vector<double>* g) {
    double worst = 0.0;
    for (int k = 0; k < n; ++k) {
      const double r = distance(path.at(sv[(k + 1) % n] + (k + 1 == n ? total : 0.0)), path.at(sv[k])) - dv;
      if (g) (*g)[k] = r;
      worst += r * r;
    }
    return std::sqrt(worst);
  };
  std::vector<double> g(n), alpha(n), beta(n), trial(n);
  double res = residual(s, d, &g);
  for (int iter = 0; iter < 200 && res > 1e-14 * d; ++iter) {
    alpha[0] = beta[0] = 0.0;
    double a = 0.0, b = 0.0;
    bool ok = true;
    for (int k = 0; k < n; ++k) {
      const Point p0 = path.at(s[k]);
      const Point p1 = path.at(k + 1 == n ? 0.0 : s[k + 1]);
      const Point c = p1 - p0;
      const double len = std::hypot(c.x, c.y);
      const Point t0 = path.tangent(s[k]);
      b = k == 0 ? 0.0 : -(c.x * t0.x + c.y * t0.y) / len;
      if (k + 1 < n) {
        const Point t1 = path.tangent(s[k + 1]);
        a = (c.x * t1.x + c.y * t1.y) / len;
        if (std::abs(a) < 1e-12) {
          ok = false;
          break;
        }
        alpha[k + 1] = (-g[k] - b * alpha[k]) / a;
        beta[k + 1] = (1.0 - b * beta[k]) / a;
      }
    }
    if (!ok) return res;
    const double denom = b * beta[n - 1] - 1.0;
    if (std::abs(denom) < 1e-300) return res;
    const double dd = (-g[n - 1] - b * alpha[n - 1]) / denom;
    double lambda = 1.0;
    bool improved = false;
    for (int half = 0; half < 30 && !improved; ++half, lambda *= 0.5) {
      bool monotone = true;
      trial[0] = 0.0;
      for (int k = 1; k < n; ++k) {
        trial[k] = s[k] + lambda * (alpha[k] + beta[k] * dd);
        monotone = monotone && trial[k] > trial[k - 1] && trial[k] < total;
      }
      const double dv = d + lambda * dd;
      if (!monotone || !(dv > 0.0)) continue;
      const double r = residual(trial, dv, nullptr);
      if (r < res) {
        s = trial;
        d = dv;
        res = residual(s, d, &g);
        improved = true;
      }
    }
    if (!improved) return res;
  }
  return res;
}

// Levenberg-Marquardt on the same system, for inputs where Newton stalls.
double equalize_chords_lm(const ArcPath& path, std::vector<double>& s, double& d) {
  const int n = static_cast<int>(s.size());
  const double total = path.total();
  auto residual = [&](const std::vector<double>& sv, double dv, Eigen::VectorXd& r) {
    for (int k = 0; k < n; ++k)
      r[k] = distance(path.at(k + 1 < n ? sv[k + 1] : 0.0), path.at(sv[k])) - dv;
    return r.norm();
  };
  Eigen::VectorXd r(n), rt(n);
  double res = residual(s, d, r);
  double mu = 1e-3;
  std::vector<double> trial(n);
  for (int iter = 0; iter < 500 && res > 1e-14 * d; ++iter) {
    // Unknowns: s_1 .. s_{n-1}, then d.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < n; ++k) {
      const Point p0 = path.at(s[k]);
      const Point p1 = path.at(k + 1 < n ? s[k + 1] : 0.0);
      const Point c = p1 - p0;
      const double len = std::max(std::hypot(c.x, c.y), 1e-300);
      if (k > 0) {
        const Point t0 = path.tangent(s[k]);
        J(k, k - 1) = -(c.x * t0.x + c.y * t0.y) / len;
      }
      if (k + 1 < n) {
        const Point t1 = path.tangent(s[k + 1]);
        J(k, k) = (c.x * t1.x + c.y * t1.y) / len;
      }
      J(k, n - 1) = -1.0;
    }
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd Jtr = J.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 20 && !improved; ++tries) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal().array() += mu * (JtJ.diagonal().array() + 1e-12);
      const Eigen::VectorXd step = A.ldlt().solve(-Jtr);
      bool monotone = true;
      trial[0] = 0.0;
      for (int k = 1; k < n; ++k) {
        trial[k] = s[k] + step[k - 1];
        monotone = monotone && trial[k] > trial[k - 1] && trial[k] < total;
      }
      const double dv = d + step[n - 1];
      const double rn = monotone && dv > 0.0 ? residual(trial, dv, rt) : res;
      if (rn < res) {
        s = trial;
        d = dv;
        r = rt;
        res = rn;
        mu = std::max(mu * 0.3, 1e-12);
        improved = true;
      } else {
        mu *= 10.0;
      }
    }
    if (!improved) break;
  }
  return res;
}

}  // namespace

double distance(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

double signed_area(std::span<const Point> pts) noexcept {
  double acc = 0.0;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = pts[i];
    const Point& q = pts[(i + 1) % n];
    acc += p.x * q.y - q.x * p.y;
  }
  return 0.5 * acc;
}

double closed_perimeter(std::span<const Point> pts) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) acc += distance(pts[i], pts[(i + 1) % pts.size()]);
  return acc;
}

Contour::Contour(std::vector<Point> vertices) : vertices_(std::move(vertices)) {
  if (vertices_.size() < 3) throw Error(Errc::DegenerateContour, "fewer than 3 vertices");
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    const Point& p = vertices_[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw Error(Errc::DegenerateContour, "non-finite vertex");
    if (distance(p, vertices_[(i + 1) % vertices_.size()]) <= kMinSpacing)
      throw Error(Errc::DegenerateContour, "repeated consecutive vertex at index " + std::to_string(i));
  }
  if (!(std::abs(signed_area(vertices_)) > 1e-12))
    throw Error(Errc::DegenerateContour, "zero enclosed area");
  make_ccw(vertices_);
}

Point Contour::centroid() const noexcept {
  Point c;
  for (const Point& p : vertices_) c = c + p;
  return (1.0 / static_cast<double>(vertices_.size())) * c;
}

Contour Contour::translated(Point delta) const {
  std::vector<Point> out = vertices_;
  for (Point& p : out) p = p + delta;
  return Contour(std::move(out));
}

Contour resample_uniform(std::span<const Point> polyline, int n) {
  if (n < 3) throw Error(Errc::DegenerateContour, "resample count must be >= 3");
  std::vector<Point> pts = drop_repeats(polyline);
  if (pts.size() < 3) throw Error(Errc::DegenerateContour, "fewer than 3 distinct points");
  make_ccw(pts);

  const ArcPath path(pts);
  const double total = path.total();
  if (!(total > kMinSpacing)) throw Error(Errc::DegenerateContour, "zero perimeter");

  // The arc covered by n first-crossing chords grows with d, so bisection finds
  // the closing chord length when that map is continuous (convex or finely
  // sampled input). Newton then removes what is left of the closing error.
  const double hi0 = total / n;
  double lo = 0.0, hi = hi0;
  for (int iter = 0; iter < 200 && hi - lo > 1e-15 * hi0; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (path.walk(mid, n) < total) lo = mid;
    else hi = mid;
  }
  double d = 0.5 * (lo + hi);
  std::vector<double> arcs;
  path.walk(d, n, &arcs);
  const double res = equalize_chords(path, arcs, d);
  if (res > 1e-12 * d) {
    // Jagged input can make the first-crossing walk jump; retry from equal arc steps.
    std::vector<double> alt(static_cast<std::size_t>(n));
    double chord = 0.0;
    for (int k = 0; k < n; ++k) alt[k] = total * k / n;
    for (int k = 0; k < n; ++k) chord += distance(path.at(alt[k]), path.at(k + 1 < n ? alt[k + 1] : 0.0)) / n;
    double alt_res = equalize_chords(path, alt, chord);
    if (alt_res > 1e-12 * chord) alt_res = equalize_chords_lm(path, alt, chord);
    if (alt_res < res) {
      arcs = std::move(alt);
      d = chord;
    }
  }
  std::vector<Point> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) out[k] = path.at(arcs[k]);
  return Contour(std::move(out));
}

RasterGrid RasterGrid::for_image(int width, int height) {
  return RasterGrid{-0.5, -0.5, 1.0, width, height};
}

RasterGrid RasterGrid::covering(const Contour& a, const Contour& b, double cell) {
  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  for (const Contour* c : {&a, &b}) {
    for (const Point& p : c->vertices()) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
  }
  RasterGrid g;
  g.cell = cell;
  g.x0 = std::floor(xmin / cell) * cell - cell;
  g.y0 = std::floor(ymin / cell) * cell - cell;
  g.cols = static_cast<int>(std::ceil((xmax - g.x0) / cell)) + 2;
  g.rows = static_cast<int>(std::ceil((ymax - g.y0) / cell)) + 2;
  return g;
}

std::vector<std::uint8_t> rasterize(std::span<const Point> poly, const RasterGrid& grid) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(grid.cols) * grid.rows, 0);
  const std::size_t n = poly.size();
  if (n < 3) return mask;
  const double tol = 1e-9 * grid.cell;
  auto col_lo = [&](double x) {
    return std::max(0, static_cast<int>(std::ceil((x - tol - grid.x0) / grid.cell - 0.5)));
  };
  auto col_hi = [&](double x) {
    return std::min(grid.cols - 1, static_cast<int>(std::floor((x + tol - grid.x0) / grid.cell - 0.5)));
  };
  std::vector<double> xs;
  for (int r = 0; r < grid.rows; ++r) {
    const double yc = grid.y0 + (r + 0.5) * grid.cell;
    std::uint8_t* row = mask.data() + static_cast<std::size_t>(r) * grid.cols;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Point& p = poly[i];
      const Point& q = poly[(i + 1) % n];
      if ((p.y <= yc && yc < q.y) || (q.y <= yc && yc < p.y))
        xs.push_back(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
      // Boundary points lying on this scanline are inside.
      if (std::abs(p.y - yc) <= tol && std::abs(q.y - yc) <= tol) {
        for (int c = col_lo(std::min(p.x, q.x)); c <= col_hi(std::max(p.x, q.x)); ++c) row[c] = 1;
      } else if (std::abs(p.y - yc) <= tol) {
        for (int c = col_lo(p.x); c <= col_hi(p.x); ++c) row[c] = 1;
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2)
      for (int c = col_lo(xs[k]); c <= col_hi(xs[k + 1]); ++c) row[c] = 1;
  }
  return mask;
}

double polygon_iou(const Contour& a, const Contour& b, const RasterGrid& grid) {
  return polygon_iou(a.vertices(), b.vertices(), grid);
}

double polygon_iou(std::span<const Point> a, std::span<const Point> b, const RasterGrid& grid) {
  const auto ma = rasterize(a, grid);
  const auto mb = rasterize(b, grid);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < ma.size(); ++i) {
    inter += (ma[i] & mb[i]);
    uni += (ma[i] | mb[i]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double hausdorff(std::span<const Point> a, std::span<const Point> b) {
  auto directed = [](std::span<const Point> from, std::span<const Point> to) {
    double worst = 0.0;
    for (const Point& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Point& q : to) best = std::min(best, distance(p, q));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

double hausdorff(const Contour& a, const Contour& b) { return hausdorff(a.vertices(), b.vertices()); }

nlohmann::json contour_to_json(const Contour& c) {
  nlohmann::json verts = nlohmann::json::array();
  for (const Point& p : c.vertices()) verts.push_back({p.x, p.y});
  return {{"vertices", std::move(verts)}, {"closed", true}};
}

Contour contour_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("vertices") || !j["vertices"].is_array())
    throw Error(Errc::MalformedJson, "contour needs a \"vertices\" array");
  if (j.contains("closed") && !(j["closed"].is_boolean() && j["closed"].get<bool>()))
    throw Error(Errc::MalformedJson, "only closed contours are supported");
  std::vector<Point> pts;
  for (const auto& v : j["vertices"]) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw Error(Errc::MalformedJson, "vertex must be [x, y]");
    pts.push_back({v[0].get<double>(), v[1].get<double>()});
  }
  return Contour(std::move(pts));
}

}  // namespace ctn
