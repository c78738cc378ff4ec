// SPDX-License-Identifier: Apache-2.0
//
// Partition a token sequence into A contiguous spans.
//
//   uniform        first n mod A spans get one extra token
//   kernel CPD     exact DP over cuts, Gaussian-kernel within-span cost
//   cluster DP     windows scored against a primitive library, exact DP over
//                  runs of windows, one primitive per run
//
// Tie rule everywhere: among equal objectives the lexicographically smallest
// cut vector wins, then the lowest primitive indices.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "segalign/error.hpp"
#include "segalign/kmeans.hpp"
#include "segalign/motion.hpp"
#include "segalign/types.hpp"

namespace segalign {

struct SegmentBoundaries {
  std::vector<std::pair<int, int>> spans;  // half-open [s, e)

  int count() const { return static_cast<int>(spans.size()); }
  int length() const { return spans.empty() ? 0 : spans.back().second; }

  // Interior cut points (the start of every span after the first).
  std::vector<int> cuts() const {
    std::vector<int> out;
    for (std::size_t i = 1; i < spans.size(); ++i) out.push_back(spans[i].first);
    return out;
  }

  static SegmentBoundaries from_cuts(const std::vector<int>& cuts, int n) {
    SegmentBoundaries b;
    int prev = 0;
    for (int c : cuts) {
      b.spans.emplace_back(prev, c);
      prev = c;
    }
    b.spans.emplace_back(prev, n);
    b.validate(n);
    return b;
  }

  void validate(int n) const {
    require(!spans.empty(), ErrorCode::Validation, "no spans");
    require(spans.front().first == 0, ErrorCode::Validation, "first span must start at 0");
    require(spans.back().second == n, ErrorCode::Validation,
            "last span ends at " + std::to_string(spans.back().second) + ", expected " + std::to_string(n));
    for (std::size_t i = 0; i < spans.size(); ++i) {
      require(spans[i].first < spans[i].second, ErrorCode::Validation, "empty span " + std::to_string(i));
      if (i + 1 < spans.size())
        require(spans[i].second == spans[i + 1].first, ErrorCode::Validation, "spans are not contiguous");
    }
  }

  friend bool operator==(const SegmentBoundaries&, const SegmentBoundaries&) = default;
};

inline nlohmann::json to_json(const SegmentBoundaries& b) {
  nlohmann::json arr = nlohmann::json::array();
  for (auto [s, e] : b.spans) arr.push_back({s, e});
  return arr;
}

inline SegmentBoundaries boundaries_from_json(const nlohmann::json& j) {
  SegmentBoundaries b;
  try {
    for (const auto& p : j) b.spans.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("boundaries json: ") + e.what());
  }
  b.validate(b.length());
  return b;
}

struct SegmentationResult {
  SegmentBoundaries boundaries;
  double objective = 0.0;
  std::vector<int> primitives;  // cluster method only: primitive per span
};

inline SegmentBoundaries uniform_segment(int n, int segments) {
  require(segments >= 1, ErrorCode::Precondition, "segment count must be >= 1");
  require(segments <= n, ErrorCode::Precondition,
          std::to_string(segments) + " segments requested for " + std::to_string(n) + " tokens");
  const int q = n / segments, r = n % segments;
  SegmentBoundaries b;
  int s = 0;
  for (int i = 0; i < segments; ++i) {
    const int len = q + (i < r ? 1 : 0);
    b.spans.emplace_back(s, s + len);
    s += len;
  }
  return b;
}

namespace detail {

struct Partition {
  std::vector<int> cuts;
  double objective = std::numeric_limits<double>::infinity();
};

// Exact minimum of sum_i span_cost(s_i, e_i) over partitions of [0, n) into
// `parts` non-empty spans. Objectives accumulate left to right, and each state
// keeps its lexicographically smallest optimal cut vector.
template <typename SpanCost>
Partition optimal_partition(int n, int parts, SpanCost&& span_cost) {
  require(parts >= 1 && parts <= n, ErrorCode::Precondition, "infeasible segment count");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best(parts + 1, std::vector<double>(n + 1, inf));
  std::vector<std::vector<std::vector<int>>> cuts(parts + 1, std::vector<std::vector<int>>(n + 1));
  for (int e = 1; e <= n; ++e) best[1][e] = span_cost(0, e);
  for (int a = 2; a <= parts; ++a) {
    for (int e = a; e <= n; ++e) {
      for (int s = a - 1; s < e; ++s) {
        const double v = best[a - 1][s] + span_cost(s, e);
        if (v < best[a][e]) {
          best[a][e] = v;
          cuts[a][e] = cuts[a - 1][s];
          cuts[a][e].push_back(s);
        } else if (v == best[a][e]) {
          std::vector<int> cand = cuts[a - 1][s];
          cand.push_back(s);
          if (cand < cuts[a][e]) cuts[a][e] = std::move(cand);
        }
      }
    }
  }
  return Partition{cuts[parts][n], best[parts][n]};
}

// Enumerates every partition in lexicographic cut order; keeps the first
// strict minimum. Shares only span_cost with optimal_partition.
template <typename SpanCost>
Partition enumerate_partitions(int n, int parts, SpanCost&& span_cost) {
  require(parts >= 1 && parts <= n, ErrorCode::Precondition, "infeasible segment count");
  Partition best;
  std::vector<int> cuts(parts - 1);
  for (int i = 0; i < parts - 1; ++i) cuts[i] = i + 1;
  while (true) {
    double total = 0.0;
    int prev = 0;
    for (int c : cuts) {
      total += span_cost(prev, c);
      prev = c;
    }
    total += span_cost(prev, n);
    if (total < best.objective) {
      best.objective = total;
      best.cuts = cuts;
    }
    // next combination of parts-1 values from [1, n-1]
    int i = parts - 2;
    while (i >= 0 && cuts[i] == n - (parts - 1) + i) --i;
    if (i < 0) break;
    ++cuts[i];
    for (int j = i + 1; j < parts - 1; ++j) cuts[j] = cuts[j - 1] + 1;
  }
  return best;
}

inline constexpr int kBruteForceMaxItems = 16;
inline constexpr int kBruteForceMaxParts = 4;

inline void check_brute_force_bounds(int n, int parts) {
  require(n <= kBruteForceMaxItems && parts <= kBruteForceMaxParts, ErrorCode::Precondition,
          "instance too large for enumeration (n=" + std::to_string(n) + ", A=" + std::to_string(parts) + ")");
}

}  // namespace detail

// Gaussian-kernel span cost: sum_i k(x_i, x_i) - (1/len) sum_{i,j} k(x_i, x_j),
// evaluated in O(1) from 2-D prefix sums of the Gram matrix.
class KernelSpanCost {
 public:
  KernelSpanCost(const Matrix& x, double sigma) : n_(static_cast<int>(x.rows())) {
    require(sigma > 0.0, ErrorCode::Precondition, "bandwidth must be positive");
    const double inv = 1.0 / (2.0 * sigma * sigma);
    prefix_ = Matrix::Zero(n_ + 1, n_ + 1);
    diag_.assign(n_ + 1, 0.0);
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        const double k = std::exp(-(x.row(i) - x.row(j)).squaredNorm() * inv);
        prefix_(i + 1, j + 1) = k + prefix_(i, j + 1) + prefix_(i + 1, j) - prefix_(i, j);
      }
      diag_[i + 1] = diag_[i] + 1.0;  // k(x, x) = 1 for the Gaussian kernel
    }
  }

  double operator()(int s, int e) const {
    const double block = prefix_(e, e) - prefix_(s, e) - prefix_(e, s) + prefix_(s, s);
    return (diag_[e] - diag_[s]) - block / static_cast<double>(e - s);
  }

  int size() const { return n_; }

 private:
  int n_;
  Matrix prefix_;
  std::vector<double> diag_;
};

// Median of pairwise Euclidean distances; 1 when that median is 0 or there
// are no pairs.
inline double median_bandwidth(const Matrix& x) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) d.push_back((x.row(i) - x.row(j)).norm());
  if (d.empty()) return 1.0;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med > 0.0 ? med : 1.0;
}

// nullopt selects the median heuristic.
using Bandwidth = std::optional<double>;

inline SegmentationResult kernel_cpd_solve(const LatentSequence& x, int segments, Bandwidth bandwidth = std::nullopt) {
  const int n = x.length();
  require(segments >= 1, ErrorCode::Precondition, "segment count must be >= 1");
  require(n >= segments, ErrorCode::Precondition,
          std::to_string(segments) + " segments requested for " + std::to_string(n) + " tokens");
  const double sigma = bandwidth ? *bandwidth : median_bandwidth(x.vectors);
  KernelSpanCost cost(x.vectors, sigma);
  if (segments == 1) return {SegmentBoundaries{{{0, n}}}, cost(0, n), {}};
  auto p = detail::optimal_partition(n, segments, cost);
  return {SegmentBoundaries::from_cuts(p.cuts, n), p.objective, {}};
}

inline SegmentBoundaries kernel_cpd_segment(const LatentSequence& x, int segments, Bandwidth bandwidth = std::nullopt) {
  return kernel_cpd_solve(x, segments, bandwidth).boundaries;
}

inline SegmentationResult brute_force_kernel_segment(const LatentSequence& x, int segments,
                                                     Bandwidth bandwidth = std::nullopt) {
  const int n = x.length();
  detail::check_brute_force_bounds(n, segments);
  const double sigma = bandwidth ? *bandwidth : median_bandwidth(x.vectors);
  KernelSpanCost cost(x.vectors, sigma);
  auto p = detail::enumerate_partitions(n, segments, cost);
  return {SegmentBoundaries::from_cuts(p.cuts, n), p.objective, {}};
}

// ---------------------------------------------------------------------------
// Clustering-based segmentation

inline constexpr int kDefaultWindow = 4;
inline constexpr int kDefaultWindowStride = 1;
inline constexpr int kDefaultPrimitives = 64;

struct PrimitiveLibrary {
  Matrix centers;  // Kp x (window * d)
  int window = kDefaultWindow;
  int stride = kDefaultWindowStride;

  int size() const { return static_cast<int>(centers.rows()); }
};

struct CostMatrix {
  Matrix costs;  // windows x primitives
};

inline int window_count(int n, int window, int stride) { return n < window ? 0 : (n - window) / stride + 1; }

// Row w is tokens [w*stride, w*stride + window) concatenated.
inline Matrix sliding_windows(const LatentSequence& x, int window, int stride) {
  require(window >= 1 && stride >= 1, ErrorCode::Precondition, "window and stride must be >= 1");
  const int count = window_count(x.length(), window, stride);
  const int d = x.dim();
  Matrix out(count, static_cast<Eigen::Index>(window) * d);
  for (int w = 0; w < count; ++w)
    for (int t = 0; t < window; ++t)
      out.block(w, static_cast<Eigen::Index>(t) * d, 1, d) = x.vectors.row(static_cast<Eigen::Index>(w) * stride + t);
  return out;
}

inline PrimitiveLibrary build_primitive_library(const std::vector<LatentSequence>& corpus, int window, int stride,
                                                int primitives, std::uint64_t seed, int iters = 25) {
  std::vector<Matrix> parts;
  Eigen::Index rows = 0, cols = -1;
  for (const auto& seq : corpus) {
    Matrix w = sliding_windows(seq, window, stride);
    if (w.rows() == 0) continue;
    require(cols < 0 || w.cols() == cols, ErrorCode::DimensionMismatch, "corpus sequences differ in dim");
    cols = w.cols();
    rows += w.rows();
    parts.push_back(std::move(w));
  }
  require(rows >= primitives, ErrorCode::InsufficientData,
          std::to_string(rows) + " windows for " + std::to_string(primitives) + " primitives");
  Matrix all(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    all.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  PrimitiveLibrary lib;
  lib.window = window;
  lib.stride = stride;
  lib.centers = kmeans(all, primitives, seed, iters).centers;
  return lib;
}

inline CostMatrix window_cost_matrix(const LatentSequence& x, const PrimitiveLibrary& lib) {
  const Matrix windows = sliding_windows(x, lib.window, lib.stride);
  require(windows.cols() == lib.centers.cols(), ErrorCode::DimensionMismatch, "library window dimension differs");
  CostMatrix c;
  c.costs.resize(windows.rows(), lib.centers.rows());
  for (Eigen::Index w = 0; w < windows.rows(); ++w)
    for (Eigen::Index p = 0; p < lib.centers.rows(); ++p) c.costs(w, p) = (windows.row(w) - lib.centers.row(p)).squaredNorm();
  return c;
}

// Cost of assigning windows [s, e) to one primitive, from column prefix sums.
class RunCost {
 public:
  explicit RunCost(const CostMatrix& c) : prefix_(Matrix::Zero(c.costs.rows() + 1, c.costs.cols())) {
    require(c.costs.allFinite(), ErrorCode::NonFinite, "cost matrix");
    for (Eigen::Index w = 0; w < c.costs.rows(); ++w) prefix_.row(w + 1) = prefix_.row(w) + c.costs.row(w);
  }

  double operator()(int s, int e, int p) const { return prefix_(e, p) - prefix_(s, p); }

  // Cheapest primitive for the run, lowest index on ties.
  std::pair<double, int> best(int s, int e) const {
    double v = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (int p = 0; p < primitives(); ++p) {
      const double c = (*this)(s, e, p);
      if (c < v) {
        v = c;
        arg = p;
      }
    }
    return {v, arg};
  }

  int windows() const { return static_cast<int>(prefix_.rows()) - 1; }
  int primitives() const { return static_cast<int>(prefix_.cols()); }

 private:
  Matrix prefix_;
};

// Partition of windows into runs (cuts in window indices) minimizing total
// assigned cost.
inline SegmentationResult cluster_dp_windows(const CostMatrix& cost, int segments) {
  const RunCost run(cost);
  const int nw = run.windows();
  require(segments >= 1 && segments <= nw, ErrorCode::Precondition,
          std::to_string(segments) + " segments for " + std::to_string(nw) + " windows");
  auto p = detail::optimal_partition(nw, segments, [&](int s, int e) { return run.best(s, e).first; });
  SegmentationResult r;
  r.boundaries = SegmentBoundaries::from_cuts(p.cuts, nw);
  r.objective = p.objective;
  for (auto [s, e] : r.boundaries.spans) r.primitives.push_back(run.best(s, e).second);
  return r;
}

// Exhaustive oracle over cuts and per-run primitive assignments.
inline SegmentationResult brute_force_cluster_windows(const CostMatrix& cost, int segments) {
  const RunCost run(cost);
  const int nw = run.windows();
  detail::check_brute_force_bounds(nw, segments);
  require(segments >= 1 && segments <= nw, ErrorCode::Precondition, "infeasible segment count");
  const int kp = run.primitives();

  SegmentationResult best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<int> cuts(segments - 1);
  for (int i = 0; i < segments - 1; ++i) cuts[i] = i + 1;
  while (true) {
    std::vector<std::pair<int, int>> spans;
    int prev = 0;
    for (int c : cuts) {
      spans.emplace_back(prev, c);
      prev = c;
    }
    spans.emplace_back(prev, nw);
    std::vector<int> assign(segments, 0);
    while (true) {
      double total = 0.0;
      for (int i = 0; i < segments; ++i) total += run(spans[i].first, spans[i].second, assign[i]);
      if (total < best.objective) {
        best.objective = total;
        best.boundaries.spans = spans;
        best.primitives = assign;
      }
      int i = segments - 1;
      while (i >= 0 && assign[i] == kp - 1) assign[i--] = 0;
      if (i < 0) break;
      ++assign[i];
    }
    int i = segments - 2;
    while (i >= 0 && cuts[i] == nw - (segments - 1) + i) --i;
    if (i < 0) break;
    ++cuts[i];
    for (int j = i + 1; j < segments - 1; ++j) cuts[j] = cuts[j - 1] + 1;
  }
  return best;
}

// A cut before window c lands on token c*stride + window/2, the center of the
// first window of the new run.
inline SegmentBoundaries windows_to_tokens(const SegmentBoundaries& window_spans, int n, int window, int stride) {
  std::vector<int> cuts;
  for (int c : window_spans.cuts()) cuts.push_back(c * stride + window / 2);
  return SegmentBoundaries::from_cuts(cuts, n);
}

inline SegmentationResult cluster_dp_solve(const LatentSequence& x, const PrimitiveLibrary& lib, int segments) {
  require(segments >= 1, ErrorCode::Precondition, "segment count must be >= 1");
  const int nw = window_count(x.length(), lib.window, lib.stride);
  require(nw >= segments, ErrorCode::Precondition,
          std::to_string(nw) + " windows cannot hold " + std::to_string(segments) + " segments");
  auto r = cluster_dp_windows(window_cost_matrix(x, lib), segments);
  r.boundaries = windows_to_tokens(r.boundaries, x.length(), lib.window, lib.stride);
  return r;
}

inline SegmentBoundaries cluster_dp_segment(const LatentSequence& x, const PrimitiveLibrary& lib, int segments) {
  return cluster_dp_solve(x, lib, segments).boundaries;
}

inline nlohmann::ordered_json to_json(const PrimitiveLibrary& lib) {
  nlohmann::ordered_json j;
  j["window"] = lib.window;
  j["stride"] = lib.stride;
  j["rows"] = lib.centers.rows();
  j["cols"] = lib.centers.cols();
  j["centers"] = std::vector<double>(lib.centers.data(), lib.centers.data() + lib.centers.size());
  return j;
}

inline PrimitiveLibrary primitive_library_from_json(const nlohmann::json& j) {
  PrimitiveLibrary lib;
  try {
    lib.window = j.at("window").get<int>();
    lib.stride = j.at("stride").get<int>();
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto flat = j.at("centers").get<std::vector<double>>();
    require(rows >= 1 && cols >= 1 && static_cast<Eigen::Index>(flat.size()) == rows * cols, ErrorCode::Validation,
            "primitive library shape does not match its data");
    lib.centers = Eigen::Map<const Matrix>(flat.data(), rows, cols);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("primitive library json: ") + e.what());
  }
  require(lib.window >= 1 && lib.stride >= 1, ErrorCode::Validation, "window and stride must be >= 1");
  return lib;
}

// ---------------------------------------------------------------------------
// Evaluation

struct SegError {
  double mean = 0.0;
  double std = 0.0;
};

// Absolute cut errors, matched in order.
inline std::vector<double> cut_errors(const SegmentBoundaries& pred, const SegmentBoundaries& truth) {
  require(pred.count() == truth.count(), ErrorCode::Validation,
          "segment counts differ: " + std::to_string(pred.count()) + " vs " + std::to_string(truth.count()));
  const auto pc = pred.cuts(), tc = truth.cuts();
  std::vector<double> errs;
  for (std::size_t i = 0; i < pc.size(); ++i) errs.push_back(std::abs(static_cast<double>(pc[i] - tc[i])));
  return errs;
}

// Mean and population std; an empty set is (0, 0).
inline SegError summarize_errors(const std::vector<double>& errs) {
  if (errs.empty()) return {};
  double mean = 0.0;
  for (double e : errs) mean += e;
  mean /= static_cast<double>(errs.size());
  double var = 0.0;
  for (double e : errs) var += (e - mean) * (e - mean);
  var /= static_cast<double>(errs.size());
  return {mean, std::sqrt(var)};
}

inline SegError seg_error_eval(const SegmentBoundaries& pred, const SegmentBoundaries& truth) {
  return summarize_errors(cut_errors(pred, truth));
}

// Pools every cut error across the corpus before summarizing.
inline SegError seg_error_eval(const std::vector<SegmentBoundaries>& pred, const std::vector<SegmentBoundaries>& truth) {
  require(pred.size() == truth.size(), ErrorCode::Validation, "corpus sizes differ");
  std::vector<double> all;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto e = cut_errors(pred[i], truth[i]);
    all.insert(all.end(), e.begin(), e.end());
  }
  return summarize_errors(all);
}

}  // namespace segalign
