// SPDX-License-Identifier: Apache-2.0
//
// Continuous motion, its latent stand-in, synthetic regime data and the
// "SGMO" binary format.
//
// SGMO layout (little-endian regardless of host):
//   bytes 0..3   magic "SGMO"
//   bytes 4..7   uint32 N (frames)
//   bytes 8..11  uint32 D (pose dims)
//   then N*D float32, row-major
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "segalign/error.hpp"
#include "segalign/io_util.hpp"
#include "segalign/rng.hpp"
#include "segalign/types.hpp"

namespace segalign {

inline constexpr int kDefaultDownsampleRatio = 4;

struct MotionSequence {
  Matrix frames;  // N x D
  double frame_rate = 20.0;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int dim() const { return static_cast<int>(frames.cols()); }

  void validate() const {
    require(frames.rows() >= 1 && frames.cols() >= 1, ErrorCode::Validation,
            "motion must have N >= 1 and D >= 1");
    require(all_finite(frames), ErrorCode::NonFinite, "motion contains non-finite entries");
    require(frame_rate > 0.0, ErrorCode::Validation, "frame_rate must be positive");
  }
};

struct LatentSequence {
  Matrix vectors;  // n x d

  int length() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

struct SyntheticSpec {
  int regime_count = 1;
  std::vector<int> frames_per_regime;
  int dim = 1;
  std::vector<Vector> regime_means;
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(regime_count >= 1, ErrorCode::Validation, "regime_count must be >= 1");
    require(static_cast<int>(frames_per_regime.size()) == regime_count &&
                static_cast<int>(regime_means.size()) == regime_count,
            ErrorCode::Validation, "regime_count must equal |frames_per_regime| and |regime_means|");
    require(dim >= 1, ErrorCode::Validation, "dim must be >= 1");
    require(noise_std >= 0.0, ErrorCode::Validation, "noise_std must be >= 0");
    for (int a = 0; a < regime_count; ++a) {
      require(frames_per_regime[a] >= 1, ErrorCode::Validation, "regime length must be >= 1");
      require(regime_means[a].size() == dim, ErrorCode::DimensionMismatch,
              "regime mean dimension differs from dim");
    }
  }
};

inline std::string encode_motion(const MotionSequence& m) {
  std::string out;
  out.reserve(12 + 4 * static_cast<std::size_t>(m.frames.size()));
  out.append("SGMO", 4);
  io::put_u32_le(out, static_cast<std::uint32_t>(m.frames.rows()));
  io::put_u32_le(out, static_cast<std::uint32_t>(m.frames.cols()));
  for (Eigen::Index i = 0; i < m.frames.rows(); ++i)
    for (Eigen::Index j = 0; j < m.frames.cols(); ++j)
      io::put_f32_le(out, static_cast<float>(m.frames(i, j)));
  return out;
}

inline MotionSequence decode_motion(const std::string& bytes, const std::string& origin = "<memory>") {
  if (bytes.size() < 4 || bytes.compare(0, 4, "SGMO") != 0)
    throw Error(ErrorCode::BadMagic, "'" + origin + "' does not start with SGMO");
  if (bytes.size() < 12) throw Error(ErrorCode::TruncatedPayload, "'" + origin + "' header is incomplete");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t n = io::get_u32_le(p + 4);
  const std::uint64_t d = io::get_u32_le(p + 8);
  if (n == 0 || d == 0) throw Error(ErrorCode::Validation, "'" + origin + "' has an empty shape");
  const std::uint64_t need = 12 + 4 * n * d;
  if (bytes.size() < need)
    throw Error(ErrorCode::TruncatedPayload, "'" + origin + "' expects " + std::to_string(need) +
                                                 " bytes, found " + std::to_string(bytes.size()));
  if (bytes.size() > need)
    throw Error(ErrorCode::Validation, "'" + origin + "' has trailing bytes after the payload");

  MotionSequence m;
  m.frames.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const unsigned char* q = p + 12;
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = 0; j < d; ++j, q += 4) {
      const float f = io::get_f32_le(q);
      if (!std::isfinite(f))
        throw Error(ErrorCode::NonFinite, "'" + origin + "' frame " + std::to_string(i) + " dim " +
                                              std::to_string(j));
      m.frames(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f;
    }
  }
  return m;
}

inline void save_motion(const MotionSequence& m, const std::filesystem::path& path) {
  m.validate();
  io::write_file_atomic(path, encode_motion(m));
}

inline MotionSequence load_motion(const std::filesystem::path& path) {
  return decode_motion(io::read_file(path), path.string());
}

struct SyntheticMotion {
  MotionSequence motion;
  std::vector<int> boundaries;  // frame index where each regime after the first begins
};

inline SyntheticMotion synth_motion(const SyntheticSpec& spec) {
  spec.validate();
  int total = 0;
  for (int len : spec.frames_per_regime) total += len;

  SyntheticMotion out;
  out.motion.frames.resize(total, spec.dim);
  Rng rng(spec.seed);
  int row = 0;
  for (int a = 0; a < spec.regime_count; ++a) {
    if (a > 0) out.boundaries.push_back(row);
    for (int f = 0; f < spec.frames_per_regime[a]; ++f, ++row) {
      for (int j = 0; j < spec.dim; ++j) {
        double v = spec.regime_means[a](j);
        if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
        out.motion.frames(row, j) = v;
      }
    }
  }
  return out;
}

// Block-mean encoder stand-in: latent i averages frames [i*ratio, (i+1)*ratio).
// Trailing N mod ratio frames are dropped.
inline LatentSequence project_latent(const MotionSequence& m, int ratio = kDefaultDownsampleRatio) {
  require(ratio >= 1, ErrorCode::Precondition, "ratio must be positive");
  require(m.num_frames() >= ratio, ErrorCode::Precondition,
          "motion has " + std::to_string(m.num_frames()) + " frames, fewer than ratio " +
              std::to_string(ratio));
  const int n = m.num_frames() / ratio;
  LatentSequence v;
  v.vectors.resize(n, m.dim());
  for (int i = 0; i < n; ++i)
    v.vectors.row(i) = m.frames.middleRows(static_cast<Eigen::Index>(i) * ratio, ratio).colwise().mean();
  return v;
}

// Repeat decoder stand-in.
inline MotionSequence reconstruct_motion(const LatentSequence& v, int ratio = kDefaultDownsampleRatio) {
  require(ratio >= 1, ErrorCode::Precondition, "ratio must be positive");
  MotionSequence m;
  m.frames.resize(static_cast<Eigen::Index>(v.length()) * ratio, v.dim());
  for (int i = 0; i < v.length(); ++i)
    for (int r = 0; r < ratio; ++r) m.frames.row(static_cast<Eigen::Index>(i) * ratio + r) = v.vectors.row(i);
  return m;
}

}  // namespace segalign
