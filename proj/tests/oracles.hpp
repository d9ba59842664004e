#pragma once

#include <functional>

#include "bcr/bcr.hpp"

namespace oracle {

using bcr::Matrix;

inline Matrix random_matrix(std::size_t n, std::size_t d, bcr::Rng& rng, double scale = 1.0) {
  Matrix m(n, d);
  for (auto& v : m.data()) v = scale * bcr::standard_normal(rng);
  return m;
}

// Central differences of f at x.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = x[k];
    x[k] = x0 + h;
    const double up = f(x);
    x[k] = x0 - h;
    const double down = f(x);
    x[k] = x0;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_k |a_k - b_k| / max(scale_floor, max |b|)
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  double num = 0.0, den = floor;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num = std::max(num, std::abs(a[k] - b[k]));
    den = std::max(den, std::abs(b[k]));
  }
  return num / den;
}

// Chamfer by direct double loop.
inline double brute_chamfer(const Matrix& a, const Matrix& b) {
  auto one_way = [](const Matrix& x, const Matrix& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double best = INFINITY;
      for (std::size_t j = 0; j < y.rows(); ++j) best = std::min(best, bcr::distance(x.row(i), y.row(j)));
      s += best;
    }
    return s / static_cast<double>(x.rows());
  };
  return one_way(a, b) + one_way(b, a);
}

// True when every nearest-neighbour match in both directions is unique by a
// margin and no pair is within `margin` of zero distance.
inline bool unique_matches(const Matrix& a, const Matrix& b, double margin = 1e-4) {
  auto check = [&](const Matrix& x, const Matrix& y) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double d1 = INFINITY, d2 = INFINITY;
      for (std::size_t j = 0; j < y.rows(); ++j) {
        const double d = bcr::distance(x.row(i), y.row(j));
        if (d < d1) d2 = d1, d1 = d;
        else if (d < d2) d2 = d;
      }
      if (d1 < margin || d2 - d1 < margin) return false;
    }
    return true;
  };
  return check(a, b) && check(b, a);
}

// One-sided Wilcoxon p by enumerating all 2^n sign assignments.
inline double wilcoxon_enumerate(std::span<const double> d) {
  std::vector<double> v;
  for (double x : d)
    if (x != 0.0) v.push_back(x);
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return std::abs(v[i]) < std::abs(v[j]); });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(v[idx[j + 1]]) == std::abs(v[idx[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
    i = j + 1;
  }
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (v[i] > 0) observed += rank[i];
  std::size_t hits = 0;
  const std::size_t total = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < total; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) w += rank[i];
    if (w >= observed - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Small encoded problem built from a fixture table.
inline bcr::Problem fixture_problem(bcr::FixtureSpec f, bcr::SplitRatios r = {0.2, 0.2, 0.6},
                                    std::uint64_t split_seed = 0) {
  return bcr::make_problem(bcr::split(bcr::make_fixture(f), r, split_seed));
}

// Gaussian-mixture sample with known components; label = component.
inline bcr::EncodedMatrix blobs(std::size_t n, const std::vector<std::vector<double>>& centers, double sd,
                                std::uint64_t seed) {
  bcr::Rng rng(seed);
  bcr::EncodedMatrix m;
  m.target.task = centers.size() == 2 ? bcr::Task::binary : bcr::Task::multiclass;
  m.target.n_classes = centers.size();
  m.values = Matrix(n, centers[0].size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % centers.size();
    for (std::size_t j = 0; j < centers[c].size(); ++j) m.values(i, j) = centers[c][j] + sd * bcr::standard_normal(rng);
    m.target.labels.push_back(static_cast<int>(c));
  }
  return m;
}

}  // namespace oracle
