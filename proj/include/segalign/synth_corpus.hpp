// SPDX-License-Identifier: Apache-2.0
//
// Synthetic annotated corpora: every sequence is a chain of action regimes
// with known frame boundaries, a templated description, its segments, and a
// per-segment text embedding. Regime means are a fixed linear image of the
// action's text embedding, so text and motion share recoverable structure.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalign/dataset.hpp"
#include "segalign/error.hpp"
#include "segalign/motion.hpp"
#include "segalign/rng.hpp"
#include "segalign/segmentation.hpp"
#include "segalign/types.hpp"

namespace segalign {

inline constexpr std::array<const char*, 12> kActionPhrases = {
    "a person walks forward", "a person runs",          "a person jumps",        "a person sits down",
    "a person waves the hands", "a person kicks",       "a person turns around", "a person crouches",
    "a person bows",          "a person stretches the arms", "a person claps",   "a person spins"};

struct CorpusSpec {
  std::uint64_t seed = 0;
  int sequences = 100;
  int dim = 8;             // D
  int ratio = kDefaultDownsampleRatio;
  int min_segments = 2;
  int max_segments = 4;
  int tokens_per_segment = 10;
  int jitter_frames = 0;   // regime length = ratio * tokens_per_segment + U{-j..j}
  double noise_std = 0.0;
  double mean_scale = 1.0;
  int actions = static_cast<int>(kActionPhrases.size());
  int embed_dim = 16;
  double embed_jitter = 0.05;
  int max_allowed_segments = kMaxSegments;

  void validate() const {
    require(sequences >= 1, ErrorCode::Validation, "sequences must be >= 1");
    require(dim >= 1 && embed_dim >= 1, ErrorCode::Validation, "dims must be >= 1");
    require(ratio >= 1, ErrorCode::Validation, "ratio must be >= 1");
    require(min_segments >= 1 && max_segments >= min_segments, ErrorCode::Validation, "segment range is empty");
    require(max_segments <= max_allowed_segments, ErrorCode::Validation,
            "max_segments " + std::to_string(max_segments) + " exceeds the limit of " +
                std::to_string(max_allowed_segments));
    require(actions >= 2 && actions <= static_cast<int>(kActionPhrases.size()), ErrorCode::Validation,
            "actions must be in [2, " + std::to_string(kActionPhrases.size()) + "]");
    require(tokens_per_segment >= 1, ErrorCode::Validation, "tokens_per_segment must be >= 1");
    require(jitter_frames >= 0 && jitter_frames < ratio * tokens_per_segment, ErrorCode::Validation,
            "jitter_frames must be in [0, ratio * tokens_per_segment)");
    require(noise_std >= 0.0, ErrorCode::Validation, "noise_std must be >= 0");
  }
};

inline CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
  CorpusSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    s.sequences = j.value("sequences", s.sequences);
    s.dim = j.value("dim", s.dim);
    s.ratio = j.value("ratio", s.ratio);
    s.min_segments = j.value("min_segments", s.min_segments);
    s.max_segments = j.value("max_segments", s.max_segments);
    s.tokens_per_segment = j.value("tokens_per_segment", s.tokens_per_segment);
    s.jitter_frames = j.value("jitter_frames", s.jitter_frames);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.mean_scale = j.value("mean_scale", s.mean_scale);
    s.actions = j.value("actions", s.actions);
    s.embed_dim = j.value("embed_dim", s.embed_dim);
    s.embed_jitter = j.value("embed_jitter", s.embed_jitter);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("corpus spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::ordered_json to_json(const CorpusSpec& s) {
  nlohmann::ordered_json j;
  j["seed"] = s.seed;
  j["sequences"] = s.sequences;
  j["dim"] = s.dim;
  j["ratio"] = s.ratio;
  j["min_segments"] = s.min_segments;
  j["max_segments"] = s.max_segments;
  j["tokens_per_segment"] = s.tokens_per_segment;
  j["jitter_frames"] = s.jitter_frames;
  j["noise_std"] = s.noise_std;
  j["mean_scale"] = s.mean_scale;
  j["actions"] = s.actions;
  j["embed_dim"] = s.embed_dim;
  j["embed_jitter"] = s.embed_jitter;
  return j;
}

struct CorpusSequence {
  DatasetRecord record;
  MotionSequence motion;
  std::vector<int> frame_boundaries;
  SegmentBoundaries token_truth;
  std::vector<int> actions;
};

struct SynthCorpus {
  std::vector<CorpusSequence> sequences;
  std::vector<Vector> action_embeddings;
  Matrix projection;  // D x embed_dim
};

// Frame cut b maps to the nearest token boundary, kept strictly increasing.
inline SegmentBoundaries token_truth_from_frames(const std::vector<int>& frame_cuts, int frames, int ratio) {
  const int n = frames / ratio;
  std::vector<int> cuts;
  for (int b : frame_cuts) {
    int c = static_cast<int>(std::lround(static_cast<double>(b) / ratio));
    c = std::max(c, cuts.empty() ? 1 : cuts.back() + 1);
    cuts.push_back(c);
  }
  for (std::size_t i = cuts.size(); i-- > 0;) {
    const int cap = (i + 1 == cuts.size() ? n : cuts[i + 1]) - 1;
    cuts[i] = std::min(cuts[i], cap);
  }
  return SegmentBoundaries::from_cuts(cuts, n);
}

inline SynthCorpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  SynthCorpus corpus;
  Rng rng(derive_seed(spec.seed, "corpus/structure"));
  for (int a = 0; a < spec.actions; ++a) {
    Vector e(spec.embed_dim);
    for (int c = 0; c < spec.embed_dim; ++c) e[c] = rng.normal();
    corpus.action_embeddings.push_back(e.normalized());
  }
  corpus.projection.resize(spec.dim, spec.embed_dim);
  for (Eigen::Index i = 0; i < corpus.projection.size(); ++i)
    corpus.projection.data()[i] = rng.normal() * spec.mean_scale * std::sqrt(static_cast<double>(spec.embed_dim) / spec.dim);

  for (int n = 0; n < spec.sequences; ++n) {
    CorpusSequence seq;
    const int segs = rng.uniform_int(spec.min_segments, spec.max_segments);
    SyntheticSpec ss;
    ss.regime_count = segs;
    ss.dim = spec.dim;
    ss.noise_std = spec.noise_std;
    ss.seed = derive_seed(spec.seed, "corpus/noise/" + std::to_string(n));
    int prev = -1;
    for (int a = 0; a < segs; ++a) {
      int act;
      do {
        act = rng.uniform_int(0, spec.actions - 1);
      } while (act == prev);
      prev = act;
      seq.actions.push_back(act);
      const int len = spec.ratio * spec.tokens_per_segment +
                      (spec.jitter_frames > 0 ? rng.uniform_int(-spec.jitter_frames, spec.jitter_frames) : 0);
      ss.frames_per_regime.push_back(len);
      ss.regime_means.push_back(corpus.projection * corpus.action_embeddings[act]);
    }
    auto synth = synth_motion(ss);
    seq.motion = std::move(synth.motion);
    seq.frame_boundaries = std::move(synth.boundaries);
    seq.token_truth = token_truth_from_frames(seq.frame_boundaries, seq.motion.num_frames(), spec.ratio);

    char id[32];
    std::snprintf(id, sizeof id, "seq%05d", n);
    seq.record.id = id;
    seq.record.motion_path = std::string("motions/") + id + ".sgmo";
    std::vector<std::vector<double>> embs;
    for (int a = 0; a < segs; ++a) {
      const auto* phrase = kActionPhrases[seq.actions[a]];
      seq.record.text_segments.emplace_back(phrase);
      if (a == 0) seq.record.raw_text = phrase;
      else seq.record.raw_text += std::string(", then ") + (phrase + 9);  // drop "a person "
      Vector e = corpus.action_embeddings[seq.actions[a]];
      for (int c = 0; c < spec.embed_dim; ++c) e[c] += spec.embed_jitter * rng.normal() / std::sqrt(spec.embed_dim);
      e.normalize();
      embs.emplace_back(e.data(), e.data() + e.size());
    }
    seq.record.embeddings = std::move(embs);
    seq.record.validate(spec.max_allowed_segments);
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

}  // namespace segalign
