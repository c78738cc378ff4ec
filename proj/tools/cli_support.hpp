// SPDX-License-Identifier: Apache-2.0
//
// Plumbing shared by the subcommands: run context, manifest, config merging
// and small file formats.
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalign/dataset.hpp"
#include "segalign/error.hpp"
#include "segalign/io_util.hpp"
#include "segalign/motion.hpp"
#include "segalign/rng.hpp"
#include "segalign/segmentation.hpp"
#include "segalign/text_segments.hpp"

namespace segalign::cli {

namespace fs = std::filesystem;

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Everything a command writes goes through write(), so the manifest lists it.
class RunContext {
 public:
  RunContext(std::string command, std::uint64_t seed, fs::path out, bool quiet)
      : command_(std::move(command)), seed_(seed), out_(std::move(out)), quiet_(quiet) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream(std::string_view name) const { return derive_seed(seed_, name); }
  const fs::path& out() const { return out_; }

  void log(const std::string& msg) const {
    if (!quiet_) std::cerr << "[" << command_ << "] " << msg << '\n';
  }

  void write(const std::string& rel, const std::string& data) {
    io::write_file_atomic(out_ / rel, data);
    files_[rel] = {data.size(), fnv1a(data)};
  }

  void set_options(std::map<std::string, std::string> opts) { options_ = std::move(opts); }

  // Lists files in path order with their FNV-1a hashes; content_hash covers
  // the listing, so two runs agree on it iff every output is identical.
  void write_manifest() {
    nlohmann::ordered_json j;
    j["command"] = command_;
    j["seed"] = seed_;
    j["options"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : options_) j["options"][k] = v;
    j["files"] = nlohmann::ordered_json::array();
    std::string listing;
    for (const auto& [path, info] : files_) {
      j["files"].push_back({{"path", path}, {"bytes", info.first}, {"fnv1a64", hex64(info.second)}});
      listing += path + ' ' + hex64(info.second) + '\n';
    }
    j["content_hash"] = hex64(fnv1a(listing));
    io::write_file_atomic(out_ / "manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::uint64_t seed_;
  fs::path out_;
  bool quiet_;
  std::map<std::string, std::string> options_;
  std::map<std::string, std::pair<std::size_t, std::uint64_t>> files_;
};

// ---------------------------------------------------------------------------
// Config merging. Entries of the JSON config become extra flags unless the
// same flag is already on the command line, so explicit flags win.

inline std::string config_value(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

inline bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args)
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  return false;
}

inline void append_config_args(const nlohmann::json& obj, const std::vector<std::string>& given,
                               std::vector<std::string>& extra) {
  for (const auto& [key, value] : obj.items()) {
    if (value.is_object()) continue;
    std::string name = key;
    for (char& c : name)
      if (c == '_') c = '-';
    const std::string flag = "--" + name;
    if (has_flag(given, flag) || name == "config") continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
    } else {
      extra.push_back(flag);
      extra.push_back(config_value(value));
    }
  }
}

// Returns argv with config-derived flags appended after the explicit ones.
inline std::vector<std::string> merge_config(const std::vector<std::string>& args,
                                             const std::vector<std::string>& subcommands) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, "config '" + path + "': " + e.what());
  }
  require(cfg.is_object(), ErrorCode::Validation, "config '" + path + "' must be a JSON object");
  std::string sub;
  for (const auto& a : args)
    for (const auto& s : subcommands)
      if (a == s && sub.empty()) sub = s;
  std::vector<std::string> extra;
  if (!sub.empty() && cfg.contains(sub) && cfg[sub].is_object()) append_config_args(cfg[sub], args, extra);
  append_config_args(cfg, args, extra);
  std::vector<std::string> out = args;
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

// ---------------------------------------------------------------------------
// Formats

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

// Headerless CSV of numbers, one row per line.
inline Matrix read_matrix_csv(const fs::path& path) {
  const std::string text = io::read_file(path);
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        require(detail::trim(cell.substr(used)).empty(), ErrorCode::Validation, "trailing characters");
      } catch (const std::exception&) {
        throw Error(ErrorCode::Validation, path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    require(rows.empty() || row.size() == rows.front().size(), ErrorCode::Validation,
            path.string() + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorCode::Validation, path.string() + ": no rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  require(m.allFinite(), ErrorCode::NonFinite, path.string() + ": non-finite values");
  return m;
}

using BoundaryMap = std::map<std::string, SegmentBoundaries>;

inline std::string encode_boundaries(const std::vector<DatasetRecord>& order, const BoundaryMap& b) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& r : order) {
    auto it = b.find(r.id);
    if (it != b.end()) j[r.id] = to_json(it->second);
  }
  return j.dump() + "\n";
}

inline BoundaryMap load_boundaries(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, "boundaries '" + path.string() + "': " + e.what());
  }
  require(j.is_object(), ErrorCode::Validation, "boundaries file must map ids to span lists");
  BoundaryMap out;
  for (const auto& [id, spans] : j.items()) out[id] = boundaries_from_json(spans);
  return out;
}

// A dataset directory: dataset.jsonl plus motion files relative to it.
struct DatasetDir {
  fs::path root;
  std::vector<DatasetRecord> records;

  static DatasetDir open(const fs::path& root, int max_segments = kMaxSegments) {
    require(!root.empty(), ErrorCode::Precondition, "--data is required");
    return {root, load_dataset(root / "dataset.jsonl", max_segments)};
  }

  fs::path motion_file(const DatasetRecord& r) const {
    const fs::path p(r.motion_path);
    return p.is_absolute() ? p : root / p;
  }

  LatentSequence latents(const DatasetRecord& r, int ratio) const {
    return project_latent(load_motion(motion_file(r)), ratio);
  }

  BoundaryMap truth_or(const std::string& explicit_path) const {
    return load_boundaries(explicit_path.empty() ? root / "truth.json" : fs::path(explicit_path));
  }
};

inline const SegmentBoundaries& find_boundaries(const BoundaryMap& m, const std::string& id) {
  auto it = m.find(id);
  require(it != m.end(), ErrorCode::Validation, "no boundaries for record '" + id + "'");
  return it->second;
}

inline std::vector<Vector> record_embeddings(const DatasetRecord& r) {
  require(r.embeddings.has_value() && r.embeddings->size() == r.text_segments.size(), ErrorCode::Validation,
          "record '" + r.id + "' lacks one embedding per text segment");
  std::vector<Vector> out;
  for (const auto& e : *r.embeddings) out.push_back(Eigen::Map<const Vector>(e.data(), static_cast<Eigen::Index>(e.size())));
  return out;
}

inline Matrix rows_matrix(const std::vector<Vector>& rows) {
  require(!rows.empty(), ErrorCode::Validation, "empty row set");
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

}  // namespace segalign::cli
