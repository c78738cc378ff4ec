// SPDX-License-Identifier: Apache-2.0
//
// Residual vector quantization: a base codebook plus k residual codebooks.
// Layer j quantizes what layers 0..j-1 left over, and the quantized latent is
// the sum of the chosen codes.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalign/error.hpp"
#include "segalign/kmeans.hpp"
#include "segalign/motion.hpp"
#include "segalign/rng.hpp"
#include "segalign/types.hpp"

namespace segalign {

inline constexpr int kDefaultResidualLayers = 5;
inline constexpr int kDefaultCodesPerLayer = 512;

struct Codebook {
  Matrix entries;  // K x d

  int size() const { return static_cast<int>(entries.rows()); }
};

struct CodebookStack {
  std::vector<Codebook> books;  // books[0] is the base codebook
  int dim = 0;

  int layers() const { return static_cast<int>(books.size()); }

  void validate() const {
    require(!books.empty(), ErrorCode::Validation, "codebook stack is empty");
    require(dim >= 1, ErrorCode::Validation, "codebook dim must be >= 1");
    for (std::size_t j = 0; j < books.size(); ++j) {
      require(books[j].entries.rows() >= 1, ErrorCode::Validation, "codebook " + std::to_string(j) + " is empty");
      require(books[j].entries.cols() == dim, ErrorCode::DimensionMismatch,
              "codebook " + std::to_string(j) + " has dim " + std::to_string(books[j].entries.cols()));
      require(all_finite(books[j].entries), ErrorCode::NonFinite, "codebook " + std::to_string(j));
    }
  }

  // The first `count` layers.
  CodebookStack truncated(int count) const {
    require(count >= 1 && count <= layers(), ErrorCode::OutOfRange, "layer count out of range");
    CodebookStack out;
    out.dim = dim;
    out.books.assign(books.begin(), books.begin() + count);
    return out;
  }
};

struct TokenSequence {
  std::vector<std::vector<int>> layers;  // (k+1) x n

  int num_layers() const { return static_cast<int>(layers.size()); }
  int length() const { return layers.empty() ? 0 : static_cast<int>(layers.front().size()); }
};

struct QuantizeResult {
  TokenSequence tokens;
  LatentSequence quantized;
};

inline QuantizeResult quantize(const LatentSequence& v, const CodebookStack& stack) {
  require(v.dim() == stack.dim, ErrorCode::DimensionMismatch,
          "latent dim " + std::to_string(v.dim()) + " vs codebook dim " + std::to_string(stack.dim));
  const int n = v.length();
  QuantizeResult out;
  out.tokens.layers.assign(stack.books.size(), std::vector<int>(static_cast<std::size_t>(n), 0));
  out.quantized.vectors = Matrix::Zero(n, stack.dim);
  for (int i = 0; i < n; ++i) {
    Eigen::RowVectorXd residual = v.vectors.row(i);
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(stack.dim);
    for (std::size_t j = 0; j < stack.books.size(); ++j) {
      const int t = nearest_row(stack.books[j].entries, residual);
      out.tokens.layers[j][i] = t;
      residual -= stack.books[j].entries.row(t);
      acc += stack.books[j].entries.row(t);
    }
    out.quantized.vectors.row(i) = acc;
  }
  return out;
}

inline LatentSequence dequantize(const TokenSequence& t, const CodebookStack& stack) {
  require(t.num_layers() <= stack.layers() && t.num_layers() >= 1, ErrorCode::OutOfRange,
          "token sequence has " + std::to_string(t.num_layers()) + " layers, stack has " +
              std::to_string(stack.layers()));
  const int n = t.length();
  LatentSequence out;
  out.vectors = Matrix::Zero(n, stack.dim);
  for (int i = 0; i < n; ++i) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(stack.dim);
    for (int j = 0; j < t.num_layers(); ++j) {
      require(static_cast<int>(t.layers[j].size()) == n, ErrorCode::Validation, "ragged token layers");
      const int tok = t.layers[j][i];
      require(tok >= 0 && tok < stack.books[j].size(), ErrorCode::OutOfRange,
              "token " + std::to_string(tok) + " at layer " + std::to_string(j) + " position " + std::to_string(i));
      acc += stack.books[j].entries.row(tok);
    }
    out.vectors.row(i) = acc;
  }
  return out;
}

inline Matrix stack_latents(const std::vector<LatentSequence>& data) {
  Eigen::Index rows = 0;
  const Eigen::Index cols = data.empty() ? 0 : data.front().vectors.cols();
  for (const auto& s : data) {
    require(s.vectors.cols() == cols, ErrorCode::DimensionMismatch, "latent sequences differ in dim");
    rows += s.vectors.rows();
  }
  Matrix all(rows, cols);
  Eigen::Index r = 0;
  for (const auto& s : data) {
    all.middleRows(r, s.vectors.rows()) = s.vectors;
    r += s.vectors.rows();
  }
  return all;
}

// Layer-wise k-means: layer 0 on the latents, layer j on the residuals left
// after greedy quantization with layers < j.
inline CodebookStack train_codebooks(const std::vector<LatentSequence>& data, int layers, int codes_per_layer,
                                     std::uint64_t seed, int iters = 25) {
  require(layers >= 1, ErrorCode::Precondition, "need at least one layer");
  Matrix residual = stack_latents(data);
  require(residual.rows() >= codes_per_layer, ErrorCode::InsufficientData,
          std::to_string(residual.rows()) + " vectors for " + std::to_string(codes_per_layer) + " codes");
  CodebookStack stack;
  stack.dim = static_cast<int>(residual.cols());
  for (int j = 0; j < layers; ++j) {
    auto km = kmeans(residual, codes_per_layer, derive_seed(seed, "rvq/layer" + std::to_string(j)), iters);
    for (Eigen::Index i = 0; i < residual.rows(); ++i) residual.row(i) -= km.centers.row(km.assignment[i]);
    stack.books.push_back(Codebook{std::move(km.centers)});
  }
  return stack;
}

inline double reconstruction_error(const std::vector<LatentSequence>& data, const CodebookStack& stack) {
  double total = 0.0;
  Eigen::Index count = 0;
  for (const auto& seq : data) {
    const auto q = quantize(seq, stack);
    total += (seq.vectors - q.quantized.vectors).rowwise().squaredNorm().sum();
    count += seq.vectors.rows();
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

inline nlohmann::ordered_json to_json(const CodebookStack& stack) {
  nlohmann::ordered_json j;
  j["dim"] = stack.dim;
  j["books"] = nlohmann::ordered_json::array();
  for (const auto& book : stack.books) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < book.entries.rows(); ++r) {
      std::vector<double> row(book.entries.row(r).begin(), book.entries.row(r).end());
      rows.push_back(row);
    }
    j["books"].push_back(std::move(rows));
  }
  return j;
}

inline CodebookStack codebook_stack_from_json(const nlohmann::json& j) {
  CodebookStack stack;
  try {
    stack.dim = j.at("dim").get<int>();
    for (const auto& book : j.at("books")) {
      const auto rows = book.get<std::vector<std::vector<double>>>();
      Codebook cb;
      cb.entries.resize(static_cast<Eigen::Index>(rows.size()), stack.dim);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        require(static_cast<int>(rows[r].size()) == stack.dim, ErrorCode::DimensionMismatch,
                "codebook row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) + " values");
        for (int c = 0; c < stack.dim; ++c) cb.entries(static_cast<Eigen::Index>(r), c) = rows[r][c];
      }
      stack.books.push_back(std::move(cb));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("codebook json: ") + e.what());
  }
  stack.validate();
  return stack;
}

}  // namespace segalign
