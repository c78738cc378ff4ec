// SPDX-License-Identifier: Apache-2.0
//
// Masked base-token generation: random masking and its NLL loss for
// training, a cosine unmasking schedule, confidence-ordered iterative decoding
// with committed (never re-masked) tokens, and layer-by-layer residual token
// decoding.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalign/error.hpp"
#include "segalign/rng.hpp"
#include "segalign/rvq.hpp"
#include "segalign/segmentation.hpp"
#include "segalign/types.hpp"

namespace segalign {

inline constexpr int kMaskToken = -1;
inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kProbabilityTolerance = 1e-9;

struct MaskState {
  std::vector<int> tokens;  // kMaskToken marks a masked slot
  std::vector<int> masked;  // ascending positions of kMaskToken entries
  std::uint64_t seed = 0;

  int length() const { return static_cast<int>(tokens.size()); }

  static MaskState fully_masked(int length) {
    MaskState s;
    s.tokens.assign(static_cast<std::size_t>(length), kMaskToken);
    for (int i = 0; i < length; ++i) s.masked.push_back(i);
    return s;
  }

  void validate() const {
    std::vector<int> expect;
    for (int i = 0; i < length(); ++i)
      if (tokens[i] == kMaskToken) expect.push_back(i);
    require(expect == masked, ErrorCode::Contract, "masked set does not match sentinel positions");
  }
};

inline int masked_count_for_ratio(int length, double ratio) {
  require(ratio > 0.0 && ratio <= 1.0, ErrorCode::Precondition, "mask ratio must be in (0, 1]");
  const int m = static_cast<int>(std::ceil(ratio * length - 1e-9));
  return std::clamp(m, 1, length);
}

// ceil(ratio * L) positions, uniformly without replacement.
inline MaskState mask_random(const std::vector<int>& tokens, double ratio, std::uint64_t seed) {
  const int length = static_cast<int>(tokens.size());
  require(length >= 1, ErrorCode::Precondition, "cannot mask an empty sequence");
  const int m = masked_count_for_ratio(length, ratio);
  std::vector<int> pos(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) pos[i] = i;
  Rng rng(seed);
  for (int i = 0; i < m; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(length - i)));
    std::swap(pos[i], pos[j]);
  }
  MaskState s;
  s.seed = seed;
  s.tokens = tokens;
  s.masked.assign(pos.begin(), pos.begin() + m);
  std::sort(s.masked.begin(), s.masked.end());
  for (int p : s.masked) s.tokens[p] = kMaskToken;
  return s;
}

struct MaskLoss {
  double value = 0.0;
  bool floored = false;  // some target probability was below kProbabilityFloor
};

// -sum over masked positions of log p(truth). probs[i] is the distribution at
// position i; unmasked positions are ignored.
inline MaskLoss mask_loss(const std::vector<Vector>& probs, const std::vector<int>& truth, const MaskState& state) {
  require(probs.size() == truth.size() && truth.size() == state.tokens.size(), ErrorCode::DimensionMismatch,
          "probabilities, truth and mask state lengths differ");
  MaskLoss out;
  for (int i : state.masked) {
    const int t = truth[i];
    require(t >= 0 && t < probs[i].size(), ErrorCode::OutOfRange, "target token " + std::to_string(t));
    double p = probs[i][t];
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      out.floored = true;
    }
    out.value -= std::log(p);
  }
  return out;
}

// Masked count after iteration t of T: floor(L cos(pi t / 2T)), forced to drop
// by at least one per iteration and to reach 0 at t = T.
inline std::vector<int> cosine_schedule(int total_iters, int length) {
  require(total_iters >= 1, ErrorCode::Precondition, "schedule needs T >= 1");
  require(length >= 0, ErrorCode::Precondition, "negative length");
  std::vector<int> m(static_cast<std::size_t>(total_iters) + 1);
  m[0] = length;
  for (int t = 1; t <= total_iters; ++t) {
    int v = static_cast<int>(std::floor(length * std::cos(std::numbers::pi * t / (2.0 * total_iters))));
    v = std::min(v, m[t - 1] - 1);
    m[t] = std::max(v, 0);
  }
  m[total_iters] = 0;
  return m;
}

inline int cosine_mask_count(int t, int total_iters, int length) {
  require(t >= 0 && t <= total_iters, ErrorCode::Precondition, "iteration index out of range");
  return cosine_schedule(total_iters, length)[t];
}

// Stand-in for a mask transformer. predict() returns one distribution over the
// base codebook for each entry of state.masked, in that order.
class TokenPredictor {
 public:
  virtual ~TokenPredictor() = default;
  virtual int vocabulary() const = 0;
  virtual std::vector<Vector> predict(const Matrix& cond, const MaskState& state) const = 0;
};

inline void check_distribution(const Vector& p, int vocabulary, const std::string& where) {
  require(p.size() == vocabulary, ErrorCode::Contract, where + ": distribution size " + std::to_string(p.size()));
  require(p.allFinite() && (p.array() >= 0.0).all(), ErrorCode::Contract, where + ": invalid probabilities");
  require(std::abs(p.sum() - 1.0) <= kProbabilityTolerance, ErrorCode::Contract,
          where + ": probabilities sum to " + std::to_string(p.sum()));
}

// Lowest index wins ties.
inline int argmax_index(const Vector& p) {
  int best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = static_cast<int>(i);
  return best;
}

inline int sample_index(const Vector& p, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return argmax_index(p);
}

struct DecodeOptions {
  int total_iters = 10;
  bool sample = false;  // argmax when false
  std::uint64_t seed = 0;
};

struct DecodeStep {
  int iteration = 0;
  int masked_count = 0;     // still masked after this iteration
  std::vector<int> fixed;   // positions committed in this iteration
};

struct DecodeResult {
  std::vector<int> tokens;
  std::vector<DecodeStep> trace;
};

inline std::string trace_to_jsonl(const std::vector<DecodeStep>& trace) {
  std::string out;
  for (const auto& s : trace) {
    nlohmann::ordered_json j;
    j["iteration"] = s.iteration;
    j["masked_count"] = s.masked_count;
    j["fixed"] = s.fixed;
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline DecodeResult iterative_decode(const Matrix& cond, int length, const TokenPredictor& predictor,
                                     const DecodeOptions& opt) {
  require(length >= 1, ErrorCode::Precondition, "decode length must be >= 1");
  const auto schedule = cosine_schedule(opt.total_iters, length);
  Rng rng(opt.seed);
  MaskState state = MaskState::fully_masked(length);
  DecodeResult out;

  for (int t = 1; t <= opt.total_iters; ++t) {
    const std::vector<Vector> probs = predictor.predict(cond, state);
    require(probs.size() == state.masked.size(), ErrorCode::Contract,
            "predictor returned " + std::to_string(probs.size()) + " distributions for " +
                std::to_string(state.masked.size()) + " masked positions");

    struct Candidate {
      int position;
      int token;
      double confidence;
    };
    std::vector<Candidate> cands;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      check_distribution(probs[k], predictor.vocabulary(), "position " + std::to_string(state.masked[k]));
      const int tok = opt.sample ? sample_index(probs[k], rng) : argmax_index(probs[k]);
      cands.push_back({state.masked[k], tok, probs[k][tok]});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      return a.position < b.position;
    });

    const int keep = static_cast<int>(state.masked.size()) - schedule[t];
    DecodeStep step;
    step.iteration = t;
    for (int i = 0; i < keep; ++i) {
      state.tokens[cands[i].position] = cands[i].token;
      step.fixed.push_back(cands[i].position);
    }
    std::sort(step.fixed.begin(), step.fixed.end());
    std::vector<int> still;
    for (int p : state.masked)
      if (state.tokens[p] == kMaskToken) still.push_back(p);
    state.masked = std::move(still);
    step.masked_count = static_cast<int>(state.masked.size());
    out.trace.push_back(std::move(step));
  }
  out.tokens = state.tokens;
  return out;
}

// Stand-in for the residual transformer: given the condition, the tokens of
// layers < layer and their dequantized sum, one distribution over the layer's
// codebook for every position.
class LayerPredictor {
 public:
  virtual ~LayerPredictor() = default;
  virtual std::vector<Vector> predict(const Matrix& cond, const TokenSequence& previous, const LatentSequence& partial_sum,
                                      int layer) const = 0;
};

// Enforces layer order: layer i may only be decoded after layers 0..i-1.
class ResidualDecoder {
 public:
  ResidualDecoder(Matrix cond, std::vector<int> base_tokens, const CodebookStack& stack)
      : cond_(std::move(cond)), stack_(stack) {
    tokens_.layers.push_back(std::move(base_tokens));
  }

  int next_layer() const { return tokens_.num_layers(); }

  void decode_layer(int layer, const LayerPredictor& predictor) {
    require(layer == next_layer(), ErrorCode::Contract,
            "layer " + std::to_string(layer) + " requested before layer " + std::to_string(next_layer()));
    require(layer < stack_.layers(), ErrorCode::OutOfRange, "stack has no layer " + std::to_string(layer));
    const LatentSequence partial = dequantize(tokens_, stack_);
    const auto probs = predictor.predict(cond_, tokens_, partial, layer);
    const int n = tokens_.length();
    require(static_cast<int>(probs.size()) == n, ErrorCode::Contract, "layer predictor output length");
    std::vector<int> row(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      check_distribution(probs[i], stack_.books[layer].size(), "layer " + std::to_string(layer));
      row[i] = argmax_index(probs[i]);
    }
    tokens_.layers.push_back(std::move(row));
  }

  const TokenSequence& tokens() const { return tokens_; }

 private:
  Matrix cond_;
  const CodebookStack& stack_;
  TokenSequence tokens_;
};

// predictors[i - 1] decodes layer i, for i = 1..k.
inline TokenSequence residual_decode(const Matrix& cond, const std::vector<int>& base_tokens,
                                     const std::vector<const LayerPredictor*>& predictors, int k,
                                     const CodebookStack& stack) {
  require(k >= 0, ErrorCode::Precondition, "negative layer count");
  ResidualDecoder dec(cond, base_tokens, stack);
  for (int layer = 1; layer <= k; ++layer) {
    require(layer - 1 < static_cast<int>(predictors.size()) && predictors[layer - 1] != nullptr, ErrorCode::Contract,
            "missing predictor for layer " + std::to_string(layer));
    dec.decode_layer(layer, *predictors[layer - 1]);
  }
  return dec.tokens();
}

// Reference predictor: softmax regression over [segment embedding of the
// position's uniform span; mean condition; positional sin/cos; 1]. cond rows
// are the text segment embeddings.
class SoftmaxRegressionPredictor : public TokenPredictor {
 public:
  SoftmaxRegressionPredictor(int vocabulary, int cond_dim, int frequencies = 4)
      : vocab_(vocabulary), cond_dim_(cond_dim), freqs_(frequencies),
        weights_(Matrix::Zero(vocabulary, 2 * cond_dim + 2 * frequencies + 1)) {
    require(vocabulary >= 1 && cond_dim >= 1, ErrorCode::Precondition, "predictor dims must be >= 1");
  }

  int vocabulary() const override { return vocab_; }
  int cond_dim() const { return cond_dim_; }
  int frequencies() const { return freqs_; }
  const Matrix& weights() const { return weights_; }
  Matrix& weights() { return weights_; }

  Vector features(const Matrix& cond, int position, int length) const {
    require(cond.cols() == cond_dim_ && cond.rows() >= 1, ErrorCode::DimensionMismatch, "condition shape");
    Vector f(weights_.cols());
    const int segs = std::min(static_cast<int>(cond.rows()), length);
    const auto spans = uniform_segment(length, segs);
    int seg = 0;
    while (position >= spans.spans[seg].second) ++seg;
    f.head(cond_dim_) = cond.row(seg).transpose();
    f.segment(cond_dim_, cond_dim_) = cond.colwise().mean().transpose();
    const double x = static_cast<double>(position) / static_cast<double>(length);
    for (int k = 0; k < freqs_; ++k) {
      f[2 * cond_dim_ + 2 * k] = std::sin(std::numbers::pi * (k + 1) * x);
      f[2 * cond_dim_ + 2 * k + 1] = std::cos(std::numbers::pi * (k + 1) * x);
    }
    f[f.size() - 1] = 1.0;
    return f;
  }

  Vector distribution(const Matrix& cond, int position, int length) const {
    Vector logits = weights_ * features(cond, position, length);
    logits.array() -= logits.maxCoeff();
    Vector p = logits.array().exp();
    return p / p.sum();
  }

  std::vector<Vector> predict(const Matrix& cond, const MaskState& state) const override {
    std::vector<Vector> out;
    for (int p : state.masked) out.push_back(distribution(cond, p, state.length()));
    return out;
  }

  std::vector<Vector> predict_all(const Matrix& cond, int length) const {
    std::vector<Vector> out;
    for (int p = 0; p < length; ++p) out.push_back(distribution(cond, p, length));
    return out;
  }

  // One gradient step on the mask loss of `state` against `truth`; returns the
  // loss before the step.
  double train_step(const Matrix& cond, const std::vector<int>& truth, const MaskState& state, double lr) {
    Matrix grad = Matrix::Zero(weights_.rows(), weights_.cols());
    double loss = 0.0;
    for (int p : state.masked) {
      const Vector f = features(cond, p, state.length());
      Vector prob = distribution(cond, p, state.length());
      loss -= std::log(std::max(prob[truth[p]], kProbabilityFloor));
      prob[truth[p]] -= 1.0;
      grad += prob * f.transpose();
    }
    weights_ -= lr * grad;
    return loss;
  }

 private:
  int vocab_;
  int cond_dim_;
  int freqs_;
  Matrix weights_;
};

inline nlohmann::ordered_json to_json(const SoftmaxRegressionPredictor& p) {
  nlohmann::ordered_json j;
  j["vocabulary"] = p.vocabulary();
  j["cond_dim"] = p.cond_dim();
  j["frequencies"] = p.frequencies();
  j["weights"] = std::vector<double>(p.weights().data(), p.weights().data() + p.weights().size());
  return j;
}

inline SoftmaxRegressionPredictor predictor_from_json(const nlohmann::json& j) {
  try {
    SoftmaxRegressionPredictor p(j.at("vocabulary").get<int>(), j.at("cond_dim").get<int>(),
                                 j.at("frequencies").get<int>());
    const auto w = j.at("weights").get<std::vector<double>>();
    require(static_cast<Eigen::Index>(w.size()) == p.weights().size(), ErrorCode::Validation,
            "predictor weights have " + std::to_string(w.size()) + " values");
    p.weights() = Eigen::Map<const Matrix>(w.data(), p.weights().rows(), p.weights().cols());
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("predictor json: ") + e.what());
  }
}

}  // namespace segalign
