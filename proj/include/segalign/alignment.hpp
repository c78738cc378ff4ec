// SPDX-License-Identifier: Apache-2.0
//
// Segment-level text-motion alignment.
//
// Motion segments come from the Mean-Max aggregator
//     m = W2 relu(W1 [mean(x_{s:e}); max(x_{s:e})] + b1) + b2
// and are contrasted against text segment embeddings with a temperature-scaled
// cosine-similarity softmax. Four variants share one engine:
//   per-sample  candidates are the segments of the same sample (default)
//   batch       candidates are all segments in the batch
//   global      one whole-text / whole-motion embedding per sample
//   token       every token is classified against its sample's text segments
// Normalization divides by the number of valid terms, so padding never
// changes the loss scale.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "segalign/error.hpp"
#include "segalign/rng.hpp"
#include "segalign/segmentation.hpp"
#include "segalign/types.hpp"

namespace segalign {

inline constexpr double kNormFloor = 1e-12;
inline constexpr double kDefaultTemperature = 0.1;

inline double cosine_sim(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), ErrorCode::DimensionMismatch,
          "cosine of vectors with dims " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  const double na = a.norm(), nb = b.norm();
  if (na < kNormFloor || nb < kNormFloor) return 0.0;
  return a.dot(b) / (na * nb);
}

// d cos(a, b) / d b
inline Vector cosine_grad_b(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < kNormFloor || nb < kNormFloor) return Vector::Zero(b.size());
  const double s = a.dot(b) / (na * nb);
  return a / (na * nb) - (s / (nb * nb)) * b;
}

enum class AlignLossKind { PerSample, Batch, Global, Token };

inline AlignLossKind parse_loss_kind(const std::string& s) {
  if (s == "sample" || s == "per-sample") return AlignLossKind::PerSample;
  if (s == "batch") return AlignLossKind::Batch;
  if (s == "global") return AlignLossKind::Global;
  if (s == "token") return AlignLossKind::Token;
  throw Error(ErrorCode::Validation, "unknown alignment loss '" + s + "'");
}

inline const char* to_string(AlignLossKind k) {
  switch (k) {
    case AlignLossKind::PerSample: return "sample";
    case AlignLossKind::Batch: return "batch";
    case AlignLossKind::Global: return "global";
    case AlignLossKind::Token: return "token";
  }
  return "unknown";
}

struct AlignmentConfig {
  double temperature = kDefaultTemperature;
  double lambda_align = 1.0;
  int max_segments = kMaxSegments;
  int batch_size = 16;

  void validate() const {
    require(temperature > 0.0, ErrorCode::Validation, "temperature must be positive");
    require(lambda_align >= 0.0, ErrorCode::Validation, "lambda_align must be >= 0");
    require(batch_size >= 1, ErrorCode::Validation, "batch_size must be >= 1");
  }
};

inline double total_loss(double mask_loss, double align_loss, const AlignmentConfig& cfg) {
  return mask_loss + cfg.lambda_align * align_loss;
}

// ---------------------------------------------------------------------------
// Aggregation

struct AggregatorParams {
  Matrix w1;  // h x 2d
  Vector b1;  // h
  Matrix w2;  // d_e x h
  Vector b2;  // d_e
  std::uint64_t seed = 0;

  int input_dim() const { return static_cast<int>(w1.cols()) / 2; }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int output_dim() const { return static_cast<int>(w2.rows()); }

  static AggregatorParams zeros_like(const AggregatorParams& p) {
    return {Matrix::Zero(p.w1.rows(), p.w1.cols()), Vector::Zero(p.b1.size()), Matrix::Zero(p.w2.rows(), p.w2.cols()),
            Vector::Zero(p.b2.size()), p.seed};
  }

  // Uniform in +-1/sqrt(fan_in); hidden width defaults to 2d.
  static AggregatorParams init(int token_dim, int embed_dim, std::uint64_t seed, int hidden = 0) {
    require(token_dim >= 1 && embed_dim >= 1, ErrorCode::Precondition, "aggregator dims must be >= 1");
    if (hidden <= 0) hidden = 2 * token_dim;
    Rng rng(derive_seed(seed, "aggregator/init"));
    AggregatorParams p;
    p.seed = seed;
    const double s1 = 1.0 / std::sqrt(2.0 * token_dim), s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    p.w1.resize(hidden, 2 * token_dim);
    p.b1.resize(hidden);
    p.w2.resize(embed_dim, hidden);
    p.b2.resize(embed_dim);
    for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = rng.uniform(-s1, s1);
    for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1[i] = rng.uniform(-s1, s1);
    for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = rng.uniform(-s2, s2);
    for (Eigen::Index i = 0; i < p.b2.size(); ++i) p.b2[i] = rng.uniform(-s2, s2);
    return p;
  }

  std::size_t num_values() const {
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(num_values());
    out.insert(out.end(), w1.data(), w1.data() + w1.size());
    out.insert(out.end(), b1.data(), b1.data() + b1.size());
    out.insert(out.end(), w2.data(), w2.data() + w2.size());
    out.insert(out.end(), b2.data(), b2.data() + b2.size());
    return out;
  }

  void unflatten(const std::vector<double>& v) {
    require(v.size() == num_values(), ErrorCode::DimensionMismatch, "flat parameter size");
    std::size_t o = 0;
    auto take = [&](double* dst, Eigen::Index n) {
      std::copy(v.begin() + static_cast<std::ptrdiff_t>(o), v.begin() + static_cast<std::ptrdiff_t>(o + n), dst);
      o += static_cast<std::size_t>(n);
    };
    take(w1.data(), w1.size());
    take(b1.data(), b1.size());
    take(w2.data(), w2.size());
    take(b2.data(), b2.size());
  }

  // this += scale * other
  void axpy(double scale, const AggregatorParams& other) {
    w1 += scale * other.w1;
    b1 += scale * other.b1;
    w2 += scale * other.w2;
    b2 += scale * other.b2;
  }

  bool finite() const { return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite(); }
};

inline Vector aggregate_mean(const Matrix& span) {
  require(span.rows() >= 1, ErrorCode::Precondition, "empty span");
  return span.colwise().mean().transpose();
}

inline Vector aggregate_max(const Matrix& span) {
  require(span.rows() >= 1, ErrorCode::Precondition, "empty span");
  return span.colwise().maxCoeff().transpose();
}

// Forward pass with the intermediates needed for backprop.
struct AggregateTrace {
  Vector pooled;     // [mean; max], 2d
  Vector pre;        // W1 pooled + b1
  Vector hidden;     // relu(pre)
  Vector output;     // d_e
  std::vector<int> argmax;  // span row supplying max for each dim
  int span_rows = 0;
};

inline AggregateTrace aggregate_mean_max_trace(const Matrix& span, const AggregatorParams& p) {
  require(span.rows() >= 1, ErrorCode::Precondition, "empty span");
  const int d = static_cast<int>(span.cols());
  require(2 * d == p.w1.cols(), ErrorCode::DimensionMismatch,
          "span dim " + std::to_string(d) + " vs aggregator input " + std::to_string(p.w1.cols() / 2));
  AggregateTrace t;
  t.span_rows = static_cast<int>(span.rows());
  t.pooled.resize(2 * d);
  t.argmax.assign(d, 0);
  for (int c = 0; c < d; ++c) {
    double sum = 0.0, mx = span(0, c);
    for (Eigen::Index r = 0; r < span.rows(); ++r) {
      sum += span(r, c);
      if (span(r, c) > mx) {
        mx = span(r, c);
        t.argmax[c] = static_cast<int>(r);
      }
    }
    t.pooled[c] = sum / static_cast<double>(span.rows());
    t.pooled[d + c] = mx;
  }
  t.pre = p.w1 * t.pooled + p.b1;
  t.hidden = t.pre.cwiseMax(0.0);
  t.output = p.w2 * t.hidden + p.b2;
  return t;
}

inline Vector aggregate_mean_max(const Matrix& span, const AggregatorParams& p) {
  return aggregate_mean_max_trace(span, p).output;
}

// Accumulates dL/dparams given dL/doutput.
inline void aggregate_backward(const AggregateTrace& t, const AggregatorParams& p, const Vector& grad_out,
                               AggregatorParams& grads) {
  grads.w2 += grad_out * t.hidden.transpose();
  grads.b2 += grad_out;
  Vector g_hidden = p.w2.transpose() * grad_out;
  for (Eigen::Index i = 0; i < g_hidden.size(); ++i)
    if (t.pre[i] <= 0.0) g_hidden[i] = 0.0;
  grads.w1 += g_hidden * t.pooled.transpose();
  grads.b1 += g_hidden;
}

// ---------------------------------------------------------------------------
// Contrastive engine

// One softmax cross-entropy over candidate (text, motion) pairs.
struct ContrastiveTerm {
  std::vector<std::pair<int, int>> candidates;  // (text index, motion index)
  int positive = 0;                             // index into candidates
  double weight = 1.0;
};

struct ContrastiveProblem {
  std::vector<Vector> text;
  std::vector<Vector> motion;
  std::vector<ContrastiveTerm> terms;
};

// Returns the loss; when grad_motion is non-null it receives dL/dmotion[k]
// (and grad_text likewise).
inline double evaluate_contrastive(const ContrastiveProblem& prob, double tau, std::vector<Vector>* grad_motion = nullptr,
                                   std::vector<Vector>* grad_text = nullptr) {
  require(tau > 0.0, ErrorCode::Precondition, "temperature must be positive");
  if (grad_motion) {
    grad_motion->assign(prob.motion.size(), Vector());
    for (std::size_t k = 0; k < prob.motion.size(); ++k) (*grad_motion)[k] = Vector::Zero(prob.motion[k].size());
  }
  if (grad_text) {
    grad_text->assign(prob.text.size(), Vector());
    for (std::size_t k = 0; k < prob.text.size(); ++k) (*grad_text)[k] = Vector::Zero(prob.text[k].size());
  }
  double loss = 0.0;
  std::vector<double> logits;
  for (const auto& term : prob.terms) {
    const std::size_t c = term.candidates.size();
    logits.resize(c);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c; ++i) {
      const auto [ti, mi] = term.candidates[i];
      logits[i] = cosine_sim(prob.text[ti], prob.motion[mi]) / tau;
      mx = std::max(mx, logits[i]);
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    loss += term.weight * (lse - logits[term.positive]);
    if (!grad_motion && !grad_text) continue;
    for (std::size_t i = 0; i < c; ++i) {
      const double g = term.weight * (std::exp(logits[i] - lse) - (static_cast<int>(i) == term.positive ? 1.0 : 0.0)) / tau;
      const auto [ti, mi] = term.candidates[i];
      if (grad_motion) (*grad_motion)[mi] += g * cosine_grad_b(prob.text[ti], prob.motion[mi]);
      if (grad_text) (*grad_text)[ti] += g * cosine_grad_b(prob.motion[mi], prob.text[ti]);
    }
  }
  return loss;
}

// Per-sample segment embeddings. Slots at or beyond valid_counts[i] are
// padding and never enter any sum.
struct SegmentEmbeddings {
  std::vector<std::vector<Vector>> text;
  std::vector<std::vector<Vector>> motion;
  std::vector<int> valid_counts;

  int batch() const { return static_cast<int>(text.size()); }

  int valid(int i) const {
    return valid_counts.empty() ? static_cast<int>(text[i].size()) : valid_counts[i];
  }

  void validate() const {
    require(text.size() == motion.size(), ErrorCode::Validation, "text and motion batch sizes differ");
    require(valid_counts.empty() || valid_counts.size() == text.size(), ErrorCode::Validation,
            "valid_counts size differs from batch");
    for (std::size_t i = 0; i < text.size(); ++i) {
      require(text[i].size() == motion[i].size(), ErrorCode::Validation,
              "sample " + std::to_string(i) + " text/motion segment counts differ");
      const int v = valid(static_cast<int>(i));
      require(v >= 0 && v <= static_cast<int>(text[i].size()), ErrorCode::Validation, "valid count out of range");
    }
  }

  SegmentEmbeddings swapped() const { return {motion, text, valid_counts}; }
};

namespace detail {

// Flattens valid slots; index[i][j] is the flat position of sample i segment j.
inline void flatten_valid(const SegmentEmbeddings& e, ContrastiveProblem& prob, std::vector<std::vector<int>>& index) {
  index.assign(e.text.size(), {});
  for (int i = 0; i < e.batch(); ++i) {
    for (int j = 0; j < e.valid(i); ++j) {
      index[i].push_back(static_cast<int>(prob.text.size()));
      prob.text.push_back(e.text[i][j]);
      prob.motion.push_back(e.motion[i][j]);
    }
  }
}

}  // namespace detail

inline ContrastiveProblem per_sample_problem(const SegmentEmbeddings& e, std::vector<std::vector<int>>* index_out = nullptr) {
  e.validate();
  ContrastiveProblem prob;
  std::vector<std::vector<int>> index;
  detail::flatten_valid(e, prob, index);
  const double w = prob.text.empty() ? 0.0 : 0.5 / static_cast<double>(prob.text.size());
  for (const auto& idx : index) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      ContrastiveTerm t2m{{}, static_cast<int>(j), w}, m2t{{}, static_cast<int>(j), w};
      for (int k : idx) {
        t2m.candidates.emplace_back(idx[j], k);
        m2t.candidates.emplace_back(k, idx[j]);
      }
      prob.terms.push_back(std::move(t2m));
      prob.terms.push_back(std::move(m2t));
    }
  }
  if (index_out) *index_out = std::move(index);
  return prob;
}

inline ContrastiveProblem batch_problem(const SegmentEmbeddings& e, std::vector<std::vector<int>>* index_out = nullptr) {
  e.validate();
  ContrastiveProblem prob;
  std::vector<std::vector<int>> index;
  detail::flatten_valid(e, prob, index);
  const int total = static_cast<int>(prob.text.size());
  const double w = total == 0 ? 0.0 : 0.5 / static_cast<double>(total);
  for (int p = 0; p < total; ++p) {
    ContrastiveTerm t2m{{}, p, w}, m2t{{}, p, w};
    for (int k = 0; k < total; ++k) {
      t2m.candidates.emplace_back(p, k);
      m2t.candidates.emplace_back(k, p);
    }
    prob.terms.push_back(std::move(t2m));
    prob.terms.push_back(std::move(m2t));
  }
  if (index_out) *index_out = std::move(index);
  return prob;
}

inline ContrastiveProblem global_problem(const std::vector<Vector>& text, const std::vector<Vector>& motion) {
  require(text.size() == motion.size(), ErrorCode::Validation, "global loss needs paired lists");
  ContrastiveProblem prob{text, motion, {}};
  const int b = static_cast<int>(text.size());
  const double w = b == 0 ? 0.0 : 0.5 / static_cast<double>(b);
  for (int i = 0; i < b; ++i) {
    ContrastiveTerm t2m{{}, i, w}, m2t{{}, i, w};
    for (int j = 0; j < b; ++j) {
      t2m.candidates.emplace_back(i, j);
      m2t.candidates.emplace_back(j, i);
    }
    prob.terms.push_back(std::move(t2m));
    prob.terms.push_back(std::move(m2t));
  }
  return prob;
}

// Token features and the text segment each token belongs to.
struct TokenEmbeddings {
  std::vector<std::vector<Vector>> tokens;   // per sample, up to L tokens
  std::vector<std::vector<int>> assignment;  // seg(x_j^i)

  void validate(const std::vector<std::vector<Vector>>& text) const {
    require(tokens.size() == assignment.size() && tokens.size() == text.size(), ErrorCode::Validation,
            "token batch shape mismatch");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      require(tokens[i].size() == assignment[i].size(), ErrorCode::Validation, "token/assignment length mismatch");
      for (int a : assignment[i])
        require(a >= 0 && a < static_cast<int>(text[i].size()), ErrorCode::OutOfRange,
                "token assigned to segment " + std::to_string(a));
    }
  }
};

// Motion entries of the problem are the tokens; text entries are the segments.
inline ContrastiveProblem token_problem(const TokenEmbeddings& tok, const std::vector<std::vector<Vector>>& text) {
  tok.validate(text);
  ContrastiveProblem prob;
  std::vector<std::vector<int>> text_index(text.size());
  for (std::size_t i = 0; i < text.size(); ++i)
    for (const auto& t : text[i]) {
      text_index[i].push_back(static_cast<int>(prob.text.size()));
      prob.text.push_back(t);
    }
  std::size_t total = 0;
  for (const auto& t : tok.tokens) total += t.size();
  const double w = total == 0 ? 0.0 : 1.0 / static_cast<double>(total);
  for (std::size_t i = 0; i < tok.tokens.size(); ++i) {
    for (std::size_t j = 0; j < tok.tokens[i].size(); ++j) {
      const int mi = static_cast<int>(prob.motion.size());
      prob.motion.push_back(tok.tokens[i][j]);
      ContrastiveTerm term{{}, tok.assignment[i][j], w};
      for (int ti : text_index[i]) term.candidates.emplace_back(ti, mi);
      prob.terms.push_back(std::move(term));
    }
  }
  return prob;
}

inline double loss_per_sample(const SegmentEmbeddings& e, const AlignmentConfig& cfg) {
  return evaluate_contrastive(per_sample_problem(e), cfg.temperature);
}

inline double loss_batch(const SegmentEmbeddings& e, const AlignmentConfig& cfg) {
  return evaluate_contrastive(batch_problem(e), cfg.temperature);
}

inline double loss_global(const std::vector<Vector>& text, const std::vector<Vector>& motion, const AlignmentConfig& cfg) {
  return evaluate_contrastive(global_problem(text, motion), cfg.temperature);
}

inline double loss_token(const TokenEmbeddings& tok, const std::vector<std::vector<Vector>>& text,
                         const AlignmentConfig& cfg) {
  return evaluate_contrastive(token_problem(tok, text), cfg.temperature);
}

// dL/dm for every motion segment slot of loss_per_sample (zero on padding).
inline std::vector<std::vector<Vector>> grad_alignment(const SegmentEmbeddings& e, const AlignmentConfig& cfg,
                                                       double* loss_out = nullptr) {
  std::vector<std::vector<int>> index;
  const auto prob = per_sample_problem(e, &index);
  std::vector<Vector> g;
  const double loss = evaluate_contrastive(prob, cfg.temperature, &g);
  if (loss_out) *loss_out = loss;
  std::vector<std::vector<Vector>> out(e.motion.size());
  for (std::size_t i = 0; i < e.motion.size(); ++i) {
    for (std::size_t j = 0; j < e.motion[i].size(); ++j)
      out[i].push_back(j < index[i].size() ? g[index[i][j]] : Vector::Zero(e.motion[i][j].size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregator-level objective

// One training sample: token features, their segmentation, and the paired
// text embeddings (one per span) plus the whole-text embedding.
struct AlignSample {
  Matrix tokens;  // L x d
  SegmentBoundaries spans;
  std::vector<Vector> text_segments;
  Vector text_global;
};

inline Vector normalized_mean(const std::vector<Vector>& v) {
  Vector m = Vector::Zero(v.front().size());
  for (const auto& x : v) m += x;
  m /= static_cast<double>(v.size());
  const double n = m.norm();
  return n > kNormFloor ? Vector(m / n) : m;
}

struct AlignObjective {
  double loss = 0.0;
  AggregatorParams grads;
  std::vector<std::vector<Vector>> motion_segments;  // forward outputs
  std::vector<std::vector<Vector>> motion_grads;     // dL/dm per segment (per-sample / batch)
};

namespace detail {

inline Matrix span_rows(const Matrix& tokens, std::pair<int, int> span) {
  require(span.first >= 0 && span.second <= tokens.rows() && span.first < span.second, ErrorCode::OutOfRange,
          "span [" + std::to_string(span.first) + "," + std::to_string(span.second) + ") outside " +
              std::to_string(tokens.rows()) + " tokens");
  return tokens.middleRows(span.first, span.second - span.first);
}

}  // namespace detail

// Loss of the chosen variant over `batch` and its gradient w.r.t. the
// aggregator. Gradients accumulate in sample order.
inline AlignObjective alignment_objective(const std::vector<const AlignSample*>& batch, const AggregatorParams& params,
                                          const AlignmentConfig& cfg, AlignLossKind kind,
                                          bool want_grad = true) {
  cfg.validate();
  AlignObjective out;
  out.grads = AggregatorParams::zeros_like(params);

  std::vector<std::vector<AggregateTrace>> traces(batch.size());
  ContrastiveProblem prob;
  std::vector<std::pair<int, int>> owner;  // flat motion index -> (sample, slot)

  if (kind == AlignLossKind::Global) {
    std::vector<Vector> text, motion;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& s = *batch[i];
      traces[i].push_back(aggregate_mean_max_trace(s.tokens, params));
      text.push_back(s.text_global.size() ? s.text_global : normalized_mean(s.text_segments));
      motion.push_back(traces[i].back().output);
      owner.emplace_back(static_cast<int>(i), 0);
    }
    prob = global_problem(text, motion);
  } else if (kind == AlignLossKind::Token) {
    TokenEmbeddings tok;
    std::vector<std::vector<Vector>> text;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& s = *batch[i];
      tok.tokens.emplace_back();
      tok.assignment.emplace_back();
      for (int si = 0; si < s.spans.count(); ++si) {
        const auto [b, e] = s.spans.spans[si];
        for (int r = b; r < e; ++r) {
          traces[i].push_back(aggregate_mean_max_trace(s.tokens.middleRows(r, 1), params));
          tok.tokens.back().push_back(traces[i].back().output);
          tok.assignment.back().push_back(si);
          owner.emplace_back(static_cast<int>(i), static_cast<int>(traces[i].size()) - 1);
        }
      }
      text.push_back(s.text_segments);
    }
    prob = token_problem(tok, text);
  } else {
    SegmentEmbeddings e;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& s = *batch[i];
      require(static_cast<int>(s.text_segments.size()) == s.spans.count(), ErrorCode::Validation,
              "sample has " + std::to_string(s.text_segments.size()) + " text segments but " +
                  std::to_string(s.spans.count()) + " spans");
      e.text.push_back(s.text_segments);
      e.motion.emplace_back();
      for (int si = 0; si < s.spans.count(); ++si) {
        traces[i].push_back(aggregate_mean_max_trace(detail::span_rows(s.tokens, s.spans.spans[si]), params));
        e.motion.back().push_back(traces[i].back().output);
        owner.emplace_back(static_cast<int>(i), si);
      }
    }
    out.motion_segments = e.motion;
    prob = kind == AlignLossKind::Batch ? batch_problem(e) : per_sample_problem(e);
  }

  std::vector<Vector> g;
  out.loss = evaluate_contrastive(prob, cfg.temperature, want_grad ? &g : nullptr);
  if (!want_grad) return out;
  if (kind == AlignLossKind::PerSample || kind == AlignLossKind::Batch) {
    out.motion_grads.resize(batch.size());
    for (std::size_t k = 0; k < owner.size(); ++k) out.motion_grads[owner[k].first].push_back(g[k]);
  }
  for (std::size_t k = 0; k < owner.size(); ++k) {
    const auto [i, slot] = owner[k];
    aggregate_backward(traces[i][slot], params, g[k], out.grads);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Toy training

struct ToyAlignmentData {
  std::vector<AlignSample> train;
  std::vector<AlignSample> heldout;
  Matrix projection;  // token_dim x embed_dim map from text to motion space
};

struct ToyAlignmentSpec {
  int train_count = 200;
  int heldout_count = 50;
  int embed_dim = 16;
  int token_dim = 12;
  int min_segments = 2;
  int max_segments = 3;
  int tokens_per_segment = 4;
  int vocabulary = 24;
  double text_jitter = 0.1;
  double token_noise = 0.3;
  std::uint64_t seed = 0;
};

// Separable task: each segment draws an action from a fixed vocabulary; its
// text embedding is the action vector (plus jitter, unit-normalized) and each
// of its tokens is a fixed linear image of that embedding plus noise. Spans
// are equal length, so uniform segmentation recovers them.
inline ToyAlignmentData make_toy_alignment_data(const ToyAlignmentSpec& spec) {
  require(spec.min_segments >= 1 && spec.max_segments >= spec.min_segments, ErrorCode::Validation, "segment range");
  require(spec.vocabulary >= spec.max_segments, ErrorCode::Validation, "vocabulary smaller than segment count");
  Rng rng(derive_seed(spec.seed, "toy/data"));
  ToyAlignmentData data;
  std::vector<Vector> vocab;
  for (int v = 0; v < spec.vocabulary; ++v) {
    Vector a(spec.embed_dim);
    for (int c = 0; c < spec.embed_dim; ++c) a[c] = rng.normal();
    vocab.push_back(a.normalized());
  }
  data.projection.resize(spec.token_dim, spec.embed_dim);
  for (Eigen::Index i = 0; i < data.projection.size(); ++i)
    data.projection.data()[i] = rng.normal() / std::sqrt(static_cast<double>(spec.embed_dim)) * 2.0;

  auto make = [&](int count, std::vector<AlignSample>& out) {
    for (int n = 0; n < count; ++n) {
      const int segs = rng.uniform_int(spec.min_segments, spec.max_segments);
      std::vector<int> actions(spec.vocabulary);
      for (int v = 0; v < spec.vocabulary; ++v) actions[v] = v;
      rng.shuffle(actions);
      AlignSample s;
      s.tokens.resize(static_cast<Eigen::Index>(segs) * spec.tokens_per_segment, spec.token_dim);
      for (int a = 0; a < segs; ++a) {
        Vector t = vocab[actions[a]];
        for (int c = 0; c < spec.embed_dim; ++c) t[c] += spec.text_jitter * rng.normal() / std::sqrt(spec.embed_dim);
        t.normalize();
        s.text_segments.push_back(t);
        const Vector base = data.projection * t;
        for (int r = 0; r < spec.tokens_per_segment; ++r)
          for (int c = 0; c < spec.token_dim; ++c)
            s.tokens(a * spec.tokens_per_segment + r, c) = base[c] + spec.token_noise * rng.normal();
      }
      s.spans = uniform_segment(static_cast<int>(s.tokens.rows()), segs);
      s.text_global = normalized_mean(s.text_segments);
      out.push_back(std::move(s));
    }
  };
  make(spec.train_count, data.train);
  make(spec.heldout_count, data.heldout);
  return data;
}

// Aggregates every span of `s` with `params`, using `spans` when given.
inline std::vector<Vector> motion_segments(const AlignSample& s, const AggregatorParams& params,
                                           const SegmentBoundaries* spans = nullptr) {
  const auto& b = spans ? *spans : s.spans;
  std::vector<Vector> out;
  for (const auto& sp : b.spans) out.push_back(aggregate_mean_max(detail::span_rows(s.tokens, sp), params));
  return out;
}

// Fraction of motion segments whose most similar text segment within the
// same sample is their own pair (lowest index on ties).
inline double intra_sample_retrieval_top1(const std::vector<AlignSample>& samples, const AggregatorParams& params) {
  int hit = 0, total = 0;
  for (const auto& s : samples) {
    const auto m = motion_segments(s, params);
    for (std::size_t j = 0; j < m.size(); ++j) {
      int best = 0;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.text_segments.size(); ++k) {
        const double sim = cosine_sim(m[j], s.text_segments[k]);
        if (sim > best_sim) {
          best_sim = sim;
          best = static_cast<int>(k);
        }
      }
      hit += best == static_cast<int>(j);
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / total;
}

struct ToyTrainOptions {
  int steps = 500;
  double learning_rate = 0.05;
  double momentum = 0.9;
  AlignLossKind loss = AlignLossKind::PerSample;
  std::uint64_t seed = 0;
  // Called before each update with the step, its loss and the current params.
  std::function<void(int, double, const AggregatorParams&)> on_step;
};

struct ToyTrainResult {
  AggregatorParams params;
  std::vector<double> curve;  // minibatch loss before each update
};

// Momentum SGD on lambda_align * alignment loss over seeded minibatches.
inline ToyTrainResult toy_train(const std::vector<AlignSample>& data, const AlignmentConfig& cfg,
                                const ToyTrainOptions& opt, std::optional<AggregatorParams> init = std::nullopt) {
  cfg.validate();
  require(!data.empty(), ErrorCode::InsufficientData, "no training samples");
  for (const auto& s : data)
    require(s.spans.count() >= 2 || opt.loss == AlignLossKind::Global || opt.loss == AlignLossKind::Batch,
            ErrorCode::Precondition, "every sample needs >= 2 segments for a nonzero loss");

  const int token_dim = static_cast<int>(data.front().tokens.cols());
  const int embed_dim = static_cast<int>(data.front().text_segments.front().size());
  ToyTrainResult res;
  res.params = init ? *init : AggregatorParams::init(token_dim, embed_dim, derive_seed(opt.seed, "toy/params"));
  AggregatorParams velocity = AggregatorParams::zeros_like(res.params);

  Rng rng(derive_seed(opt.seed, "toy/batches"));
  std::vector<int> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::size_t cursor = order.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), data.size());

  for (int step = 0; step < opt.steps; ++step) {
    std::vector<const AlignSample*> batch;
    while (batch.size() < bs) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    auto obj = alignment_objective(batch, res.params, cfg, opt.loss);
    const double loss = cfg.lambda_align * obj.loss;
    if (!std::isfinite(loss))
      throw Error(ErrorCode::Divergence, "loss became non-finite at step " + std::to_string(step));
    res.curve.push_back(loss);
    if (opt.on_step) opt.on_step(step, loss, res.params);
    velocity.w1 = opt.momentum * velocity.w1 + cfg.lambda_align * obj.grads.w1;
    velocity.b1 = opt.momentum * velocity.b1 + cfg.lambda_align * obj.grads.b1;
    velocity.w2 = opt.momentum * velocity.w2 + cfg.lambda_align * obj.grads.w2;
    velocity.b2 = opt.momentum * velocity.b2 + cfg.lambda_align * obj.grads.b2;
    res.params.axpy(-opt.learning_rate, velocity);
    if (!res.params.finite())
      throw Error(ErrorCode::Divergence, "parameters became non-finite at step " + std::to_string(step));
  }
  return res;
}

inline nlohmann::ordered_json to_json(const AggregatorParams& p) {
  auto mat = [](const Matrix& m) {
    nlohmann::ordered_json j;
    j["shape"] = {m.rows(), m.cols()};
    j["data"] = std::vector<double>(m.data(), m.data() + m.size());
    return j;
  };
  auto vec = [](const Vector& v) {
    nlohmann::ordered_json j;
    j["shape"] = {v.size()};
    j["data"] = std::vector<double>(v.data(), v.data() + v.size());
    return j;
  };
  nlohmann::ordered_json j;
  j["seed"] = p.seed;
  j["w1"] = mat(p.w1);
  j["b1"] = vec(p.b1);
  j["w2"] = mat(p.w2);
  j["b2"] = vec(p.b2);
  return j;
}

inline AggregatorParams aggregator_from_json(const nlohmann::json& j) {
  auto mat = [](const nlohmann::json& m) {
    const auto shape = m.at("shape").get<std::vector<Eigen::Index>>();
    const auto data = m.at("data").get<std::vector<double>>();
    require(shape.size() == 2 && static_cast<Eigen::Index>(data.size()) == shape[0] * shape[1], ErrorCode::Validation,
            "matrix shape does not match data");
    return Matrix(Eigen::Map<const Matrix>(data.data(), shape[0], shape[1]));
  };
  auto vec = [](const nlohmann::json& v) {
    const auto shape = v.at("shape").get<std::vector<Eigen::Index>>();
    const auto data = v.at("data").get<std::vector<double>>();
    require(shape.size() == 1 && static_cast<Eigen::Index>(data.size()) == shape[0], ErrorCode::Validation,
            "vector shape does not match data");
    return Vector(Eigen::Map<const Vector>(data.data(), shape[0]));
  };
  AggregatorParams p;
  try {
    p.seed = j.at("seed").get<std::uint64_t>();
    p.w1 = mat(j.at("w1"));
    p.b1 = vec(j.at("b1"));
    p.w2 = mat(j.at("w2"));
    p.b2 = vec(j.at("b2"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("aggregator json: ") + e.what());
  }
  require(p.w1.cols() % 2 == 0 && p.b1.size() == p.w1.rows() && p.w2.cols() == p.w1.rows() && p.b2.size() == p.w2.rows(),
          ErrorCode::Validation, "aggregator shapes are inconsistent");
  return p;
}

}  // namespace segalign
