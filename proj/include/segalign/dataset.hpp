// SPDX-License-Identifier: Apache-2.0
//
// Dataset file: one JSON object per line,
//   {"id":..., "text":..., "segments":[...], "motion":"rel/path.sgmo", "embeddings":[[...],...]}
// `embeddings` is optional. Lines are written with a fixed key order so that
// read -> write reproduces the file byte for byte.
#pragma once

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "segalign/error.hpp"
#include "segalign/io_util.hpp"
#include "segalign/types.hpp"

namespace segalign {

struct DatasetRecord {
  std::string id;
  std::string raw_text;
  std::vector<std::string> text_segments;
  std::string motion_path;
  std::optional<std::vector<std::vector<double>>> embeddings;

  void validate(int max_segments = kMaxSegments) const {
    require(!id.empty(), ErrorCode::Validation, "record id is empty");
    require(!text_segments.empty(), ErrorCode::Validation, "record '" + id + "' has no segments");
    require(static_cast<int>(text_segments.size()) <= max_segments, ErrorCode::Validation,
            "record '" + id + "' has " + std::to_string(text_segments.size()) + " segments, max " +
                std::to_string(max_segments));
    for (const auto& s : text_segments)
      require(!s.empty(), ErrorCode::Validation, "record '" + id + "' has an empty segment");
    if (embeddings && !embeddings->empty()) {
      const auto dim = embeddings->front().size();
      for (const auto& e : *embeddings)
        require(e.size() == dim && dim > 0, ErrorCode::DimensionMismatch,
                "record '" + id + "' embeddings do not share one dimension");
    }
  }
};

inline nlohmann::ordered_json to_json(const DatasetRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["text"] = r.raw_text;
  j["segments"] = r.text_segments;
  j["motion"] = r.motion_path;
  if (r.embeddings) j["embeddings"] = *r.embeddings;
  return j;
}

inline DatasetRecord record_from_json(const nlohmann::json& j) {
  DatasetRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.raw_text = j.at("text").get<std::string>();
    r.text_segments = j.at("segments").get<std::vector<std::string>>();
    r.motion_path = j.at("motion").get<std::string>();
    if (j.contains("embeddings")) r.embeddings = j.at("embeddings").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Validation, std::string("dataset record: ") + e.what());
  }
  return r;
}

inline std::string encode_dataset(const std::vector<DatasetRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<DatasetRecord> decode_dataset(const std::string& text, int max_segments = kMaxSegments) {
  std::vector<DatasetRecord> records;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::Validation, "dataset line " + std::to_string(lineno) + ": " + e.what());
    }
    records.push_back(record_from_json(j));
    records.back().validate(max_segments);
  }
  return records;
}

inline void save_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_dataset(records));
}

inline std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path, int max_segments = kMaxSegments) {
  return decode_dataset(io::read_file(path), max_segments);
}

}  // namespace segalign
