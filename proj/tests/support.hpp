#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ctn/corrections.hpp"
#include "ctn/diff.hpp"
#include "ctn/geometry.hpp"

namespace ctn::testing {

using LossFn = std::function<diff::Value(diff::Tape&, const diff::Value&)>;

// Analytic gradient of f at x from one backward pass.
inline std::vector<double> analytic_grad(const LossFn& f, const diff::Tensor& x) {
  diff::Tape tape;
  const diff::Value v = tape.variable(x);
  tape.backward(f(tape, v));
  const auto g = v.grad();
  return {g.begin(), g.end()};
}

inline double eval_at(const LossFn& f, const diff::Tensor& x) {
  diff::Tape tape;
  return f(tape, tape.constant(x)).item();
}

// Central differences with step h.
inline std::vector<double> numeric_grad(const LossFn& f, const diff::Tensor& x, double h = 1e-5) {
  std::vector<double> g(x.data.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    diff::Tensor p = x, m = x;
    p.data[i] += h;
    m.data[i] -= h;
    g[i] = (eval_at(f, p) - eval_at(f, m)) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||), with an absolute floor for all-zero gradients.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
  return std::sqrt(diff) / denom;
}

inline double gradient_check(const LossFn& f, const diff::Tensor& x, double h = 1e-5) {
  return relative_error(analytic_grad(f, x), numeric_grad(f, x, h));
}

inline diff::Tensor random_tensor(std::mt19937_64& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  diff::Tensor t = diff::Tensor::zeros(rows, cols);
  for (double& v : t.data) v = u(rng);
  return t;
}

// Star-shaped random contour around center with radii in [r_lo, r_hi].
inline std::vector<Point> random_star(std::mt19937_64& rng, int n, Point center, double r_lo, double r_hi) {
  std::uniform_real_distribution<double> u(r_lo, r_hi);
  std::vector<Point> pts(n);
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * M_PI * i / n;
    const double r = u(rng);
    pts[i] = {center.x + r * std::cos(a), center.y + r * std::sin(a)};
  }
  return pts;
}

// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("ctn_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

// Exhaustive reference for correspond_segments: both arcs between the
// endpoint-nearest vertices are listed explicitly and scored from scratch.
inline Assignment brute_force_correspondence(std::span<const Point> pred, const CorrectionSet& cs) {
  const int n = static_cast<int>(pred.size());
  auto nearest = [](std::span<const Point> set, Point q) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(set.size()); ++i)
      if (distance(set[i], q) < distance(set[best], q)) best = i;
    return best;
  };
  Assignment out;
  std::vector<bool> taken(n, false);
  for (int s = 0; s < static_cast<int>(cs.segments.size()); ++s) {
    const auto& seg = cs.segments[s];
    if (seg.empty()) continue;
    const int a = nearest(pred, seg.front()), b = nearest(pred, seg.back());
    std::vector<int> arc{a};
    if (a != b) {
      std::vector<int> up, down;
      for (int k = 0; k < n; ++k) {
        const int u = (a + k) % n, d = (a - k + n) % n;
        if (up.empty() || up.back() != b) up.push_back(u);
        if (down.empty() || down.back() != b) down.push_back(d);
      }
      auto score = [&](const std::vector<int>& arc_) {
        double t = 0.0;
        for (int i : arc_) {
          double m = 1e300;
          for (const Point& q : seg) m = std::min(m, distance(pred[i], q));
          t += m;
        }
        return t / arc_.size();
      };
      const double su = score(up), sd = score(down);
      if (std::abs(su - sd) <= 1e-12 * std::max({1.0, su, sd})) arc = down.size() < up.size() ? down : up;
      else arc = su < sd ? up : down;
    }
    for (int i : arc) {
      if (taken[i]) continue;
      taken[i] = true;
      const int k = nearest(seg, pred[i]);
      out.push_back({i, s, k, seg[k]});
    }
  }
  return out;
}

}  // namespace ctn::testing
