// SPDX-License-Identifier: Apache-2.0
//
// Helpers and independent oracles shared by the test suites. Nothing here
// calls into the code paths it is used to check.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "segalign/rng.hpp"
#include "segalign/types.hpp"

namespace segalign::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "segalign") {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Vector random_vector(int n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

// Central differences of f at x, step h.
inline std::vector<double> central_differences(const std::function<double(const std::vector<double>&)>& f,
                                               std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// |a - f| / max(1, |a|, |f|)
inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

// Gaussian-kernel span cost evaluated directly from its definition.
inline double direct_kernel_cost(const Matrix& x, int s, int e, double sigma) {
  auto k = [&](int i, int j) { return std::exp(-(x.row(i) - x.row(j)).squaredNorm() / (2.0 * sigma * sigma)); };
  double diag = 0.0, block = 0.0;
  for (int i = s; i < e; ++i) {
    diag += k(i, i);
    for (int j = s; j < e; ++j) block += k(i, j);
  }
  return diag - block / (e - s);
}

// Minimum over all single-cut positions of the two-span direct kernel cost.
inline int best_single_cut(const Matrix& x, double sigma) {
  const int n = static_cast<int>(x.rows());
  int best = 1;
  double best_v = direct_kernel_cost(x, 0, 1, sigma) + direct_kernel_cost(x, 1, n, sigma);
  for (int c = 2; c < n; ++c) {
    const double v = direct_kernel_cost(x, 0, c, sigma) + direct_kernel_cost(x, c, n, sigma);
    if (v < best_v - 1e-12) {
      best_v = v;
      best = c;
    }
  }
  return best;
}

// log(1 + e^{-x}) without cancellation.
inline double log1pexp_neg(double x) { return std::log1p(std::exp(-x)); }

}  // namespace segalign::testing
