// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "segalign/alignment.hpp"
#include "segalign/error.hpp"
#include "segalign/rng.hpp"
#include "segalign/types.hpp"

namespace segalign {

// ---------------------------------------------------------------------------
// Retrieval applications

inline constexpr int kDefaultGroundingWindow = 5;

struct GroundingQuery {
  Vector text_embedding;
  int window_size = kDefaultGroundingWindow;
  int stride = 1;
};

struct GroundingResult {
  int best_start = 0;
  std::vector<int> starts;           // window start index per column
  std::vector<double> similarities;  // one per window
};

// Argmax (lowest index on ties) of a similarity vector.
inline int argmax_first(const std::vector<double>& v) {
  require(!v.empty(), ErrorCode::Precondition, "argmax of empty vector");
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

inline GroundingResult motion_grounding(const GroundingQuery& q, const Matrix& motion_tokens,
                                        const AggregatorParams& model) {
  require(q.window_size >= 1 && q.stride >= 1, ErrorCode::Precondition, "window and stride must be >= 1");
  require(motion_tokens.rows() >= q.window_size, ErrorCode::Precondition,
          "motion of " + std::to_string(motion_tokens.rows()) + " tokens is shorter than window " +
              std::to_string(q.window_size));
  GroundingResult r;
  for (int s = 0; s + q.window_size <= motion_tokens.rows(); s += q.stride) {
    const Vector m = aggregate_mean_max(motion_tokens.middleRows(s, q.window_size), model);
    r.starts.push_back(s);
    r.similarities.push_back(cosine_sim(q.text_embedding, m));
  }
  r.best_start = r.starts[argmax_first(r.similarities)];
  return r;
}

inline int m2t_retrieve(const Vector& motion_query, const std::vector<Vector>& candidates) {
  require(!candidates.empty(), ErrorCode::Precondition, "no candidate texts");
  std::vector<double> sims;
  for (const auto& c : candidates) sims.push_back(cosine_sim(motion_query, c));
  return argmax_first(sims);
}

// ---------------------------------------------------------------------------
// Intra-segment consistency

inline double isc_score(const std::vector<std::pair<Vector, Vector>>& pairs) {
  require(!pairs.empty(), ErrorCode::Precondition, "ISC of no pairs");
  double s = 0.0;
  for (const auto& [t, m] : pairs) s += cosine_sim(t, m);
  return s / static_cast<double>(pairs.size());
}

// Population std over mean.
inline double isc_cv(const std::vector<double>& values) {
  require(!values.empty(), ErrorCode::Precondition, "CV of an empty list");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  require(mean != 0.0, ErrorCode::Numerical, "CV undefined for zero mean");
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return std::sqrt(var) / mean;
}

// ---------------------------------------------------------------------------
// Generation metrics on evaluator features (rows = samples)

inline constexpr int kRPrecisionPool = 32;
inline constexpr int kDiversityPairs = 300;
inline constexpr double kFidRegularization = 1e-6;
inline constexpr double kFidNegativeTolerance = -1e-8;

struct RPrecision {
  double value = 0.0;
  bool small_pool_warning = false;  // fewer samples than one pool
  int pools = 0;
};

// Text i's true motion is row i. Within each pool of `pool` consecutive pairs
// (drop-last), motions are ranked by Euclidean distance to the text; a hit is
// a true pair ranked within the first topk (lower index first on equal
// distance).
inline RPrecision r_precision(const Matrix& text, const Matrix& motion, int topk, int pool = kRPrecisionPool) {
  require(text.rows() == motion.rows() && text.cols() == motion.cols(), ErrorCode::DimensionMismatch,
          "text and motion feature sets differ in shape");
  require(topk >= 1, ErrorCode::Precondition, "topk must be >= 1");
  const int b = static_cast<int>(text.rows());
  require(b > topk, ErrorCode::Precondition, "need more samples than topk");
  RPrecision r;
  int pool_size = pool;
  if (b < pool) {
    pool_size = b;
    r.small_pool_warning = true;
  }
  r.pools = b / pool_size;
  int hits = 0, total = 0;
  for (int p = 0; p < r.pools; ++p) {
    const int o = p * pool_size;
    for (int i = 0; i < pool_size; ++i) {
      const double own = (text.row(o + i) - motion.row(o + i)).norm();
      int rank = 0;
      for (int j = 0; j < pool_size; ++j) {
        if (j == i) continue;
        const double d = (text.row(o + i) - motion.row(o + j)).norm();
        if (d < own || (d == own && j < i)) ++rank;
      }
      hits += rank < topk;
      ++total;
    }
  }
  r.value = static_cast<double>(hits) / total;
  return r;
}

inline double mm_dist(const Matrix& text, const Matrix& motion) {
  require(text.rows() == motion.rows() && text.cols() == motion.cols() && text.rows() >= 1,
          ErrorCode::DimensionMismatch, "MM-Dist needs paired feature sets");
  return (text - motion).rowwise().norm().mean();
}

// Mean distance over `pairs` random pairs (i != j within a pair; pairs may
// repeat across draws).
inline double diversity(const Matrix& motion, int pairs, std::uint64_t seed) {
  require(motion.rows() >= 2, ErrorCode::InsufficientData, "diversity needs >= 2 embeddings");
  require(pairs >= 1, ErrorCode::Precondition, "pairs must be >= 1");
  Rng rng(seed);
  const auto n = static_cast<std::uint64_t>(motion.rows());
  double total = 0.0;
  for (int k = 0; k < pairs; ++k) {
    const auto i = static_cast<Eigen::Index>(rng.below(n));
    auto j = static_cast<Eigen::Index>(rng.below(n - 1));
    if (j >= i) ++j;
    total += (motion.row(i) - motion.row(j)).norm();
  }
  return total / pairs;
}

struct GaussianStats {
  Vector mean;
  Matrix cov;
};

// Sample mean and unbiased covariance, regularized by +eps I when there are
// no more samples than dimensions.
inline GaussianStats fit_gaussian(const Matrix& feats) {
  require(feats.rows() >= 2, ErrorCode::InsufficientData, "need >= 2 samples for a covariance");
  require(feats.allFinite(), ErrorCode::NonFinite, "features contain non-finite values");
  GaussianStats g;
  g.mean = feats.colwise().mean().transpose();
  const Matrix centered = feats.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(feats.rows() - 1);
  if (feats.rows() <= feats.cols()) g.cov += kFidRegularization * Matrix::Identity(feats.cols(), feats.cols());
  return g;
}

namespace detail {

inline Eigen::VectorXd checked_eigenvalues(const Eigen::VectorXd& ev, const char* what) {
  Eigen::VectorXd out = ev;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out[i] < kFidNegativeTolerance)
      throw Error(ErrorCode::Numerical, std::string(what) + " has eigenvalue " + std::to_string(out[i]));
    out[i] = std::max(out[i], 0.0);
  }
  return out;
}

}  // namespace detail

// ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)
inline double fid_from_stats(const GaussianStats& a, const GaussianStats& b) {
  require(a.mean.size() == b.mean.size() && a.cov.rows() == b.cov.rows(), ErrorCode::DimensionMismatch,
          "Gaussian dimensions differ");
  using Solver = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>;
  const Eigen::MatrixXd ca = a.cov, cb = b.cov;
  Solver ea(0.5 * (ca + ca.transpose()));
  const Eigen::VectorXd la = detail::checked_eigenvalues(ea.eigenvalues(), "covariance A");
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * la.cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();
  const Eigen::MatrixXd inner = sqrt_a * cb * sqrt_a;
  Solver ei(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd li = detail::checked_eigenvalues(ei.eigenvalues(), "covariance product");
  const double trace_term = ca.trace() + cb.trace() - 2.0 * li.cwiseSqrt().sum();
  const double v = (a.mean - b.mean).squaredNorm() + trace_term;
  require(std::isfinite(v), ErrorCode::Numerical, "FID is not finite");
  return std::max(v, 0.0);
}

inline double fid(const Matrix& feats_a, const Matrix& feats_b) {
  require(feats_a.cols() == feats_b.cols(), ErrorCode::DimensionMismatch, "feature dims differ");
  return fid_from_stats(fit_gaussian(feats_a), fit_gaussian(feats_b));
}

// ---------------------------------------------------------------------------
// Reports

struct EvalReport {
  std::map<std::string, double> values;
  std::map<std::string, std::string> metadata;

  void set(const std::string& name, double v) {
    require(std::isfinite(v), ErrorCode::NonFinite, "metric '" + name + "' is not finite");
    values[name] = v;
  }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "metric,value\n";
    for (const auto& [k, v] : values) out << k << ',' << v << '\n';
    return out.str();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["metrics"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values) j["metrics"][k] = v;
    j["metadata"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : metadata) j["metadata"][k] = v;
    return j;
  }
};

// Rows = text segments, columns = window start indices.
inline std::string similarity_map_csv(const std::vector<GroundingResult>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "segment";
  if (!rows.empty())
    for (int s : rows.front().starts) out << ',' << s;
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << r;
    for (double v : rows[r].similarities) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace segalign
