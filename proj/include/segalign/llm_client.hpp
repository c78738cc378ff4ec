// SPDX-License-Identifier: Apache-2.0
//
// Text decomposition through an OpenAI-style chat-completions endpoint, with
// an append-only JSON-lines cache ({model, input, output} per line) so that a
// corpus is decomposed once and re-runs are offline.
#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>

// Eigen first: resolv.h (via httplib) defines a `_res` macro that collides
// with Eigen parameter names.
#include "segalign/error.hpp"
#include "segalign/text_segments.hpp"

#include <httplib.h>
#include <json.hpp>

namespace segalign {

struct LlmEndpointConfig {
  std::string base_url = "http://127.0.0.1:11434/v1";
  std::string model_name = "qwen3:8b";
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::chrono::milliseconds retry_backoff{200};
  std::filesystem::path cache_path;  // empty = no cache

  void validate() const {
    require(timeout.count() > 0, ErrorCode::Validation, "timeout must be positive");
    require(max_retries >= 0, ErrorCode::Validation, "max_retries must be >= 0");
    require(!base_url.empty(), ErrorCode::Validation, "base_url is empty");
  }
};

// SEGALIGN_LLM_URL, when set and non-empty, replaces cfg.base_url.
inline LlmEndpointConfig apply_env_overrides(LlmEndpointConfig cfg) {
  if (const char* url = std::getenv("SEGALIGN_LLM_URL"); url != nullptr && *url != '\0') cfg.base_url = url;
  return cfg;
}

class LlmCache {
 public:
  LlmCache() = default;

  explicit LlmCache(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.empty() || !std::filesystem::exists(path_)) return;
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        entries_[{j.at("model").get<std::string>(), j.at("input").get<std::string>()}] =
            j.at("output").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        // A torn final line from an interrupted append is ignored.
      }
    }
  }

  std::optional<std::string> lookup(const std::string& model, const std::string& input) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find({model, input});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void insert(const std::string& model, const std::string& input, const std::string& output) {
    std::lock_guard lock(mu_);
    entries_[{model, input}] = output;
    if (path_.empty()) return;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot append to cache '" + path_.string() + "'");
    nlohmann::ordered_json j;
    j["model"] = model;
    j["input"] = input;
    j["output"] = output;
    out << j.dump() << '\n';
    out.flush();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, std::string> entries_;
};

namespace detail {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

inline ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  require(scheme_end != std::string::npos, ErrorCode::Validation, "endpoint url lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  if (path.size() < 17 || path.compare(path.size() - 17, 17, "/chat/completions") != 0) {
    if (path.empty()) path = "/v1";
    path += "/chat/completions";
  }
  out.path = path;
  return out;
}

// Cleans a model reply; returns nullopt if it breaks the reply format.
inline std::optional<std::string> clean_response(std::string text) {
  text = trim(text);
  if (starts_with_ci(text, "<think>")) {
    const auto close = text.find("</think>");
    if (close == std::string::npos) return std::nullopt;
    text = trim(std::string_view(text).substr(close + 8));
  }
  if (text.empty()) return std::nullopt;
  if (starts_with_ci(text, "output:")) return std::nullopt;
  if (text.find('\n') != std::string::npos) return std::nullopt;
  if (text.front() == '"' || text.front() == '\'' || text.back() == '"') return std::nullopt;
  return text;
}

}  // namespace detail

inline std::string build_chat_request(const std::string& model, std::string_view raw) {
  nlohmann::ordered_json body;
  body["model"] = model;
  body["messages"] = nlohmann::ordered_json::array();
  body["messages"].push_back({{"role", "user"}, {"content", build_segment_prompt(raw)}});
  body["stream"] = false;
  return body.dump();
}

class LlmDecomposer {
 public:
  explicit LlmDecomposer(LlmEndpointConfig cfg) : cfg_(apply_env_overrides(std::move(cfg))), cache_(cfg_.cache_path) {
    cfg_.validate();
  }

  const LlmEndpointConfig& config() const { return cfg_; }
  int requests_issued() const { return requests_; }
  const LlmCache& cache() const { return cache_; }

  TextSegmentSet decompose(const std::string& raw, int max_segments = kMaxSegments) {
    require(!detail::trim(raw).empty(), ErrorCode::Precondition, "raw text is empty");
    std::string content;
    if (auto hit = cache_.lookup(cfg_.model_name, raw)) {
      content = *hit;
    } else {
      const std::string reply = request(raw);
      auto cleaned = detail::clean_response(reply);
      if (!cleaned) throw Error(ErrorCode::MalformedResponse, "response: " + reply);
      try {
        (void)parse_segment_string(*cleaned, max_segments);
      } catch (const Error& e) {
        throw Error(ErrorCode::MalformedResponse, std::string(e.what()) + "; response: " + reply);
      }
      cache_.insert(cfg_.model_name, raw, *cleaned);
      content = *cleaned;
    }
    TextSegmentSet set = parse_segment_string(content, max_segments);
    set.raw_text = raw;
    set.source = SegmentSource::Llm;
    return set;
  }

 private:
  std::string request(const std::string& raw) {
    const auto url = detail::parse_url(cfg_.base_url);
    const std::string body = build_chat_request(cfg_.model_name, raw);
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(cfg_.retry_backoff * attempt);
      httplib::Client client(url.scheme_host_port);
      const auto secs = cfg_.timeout.count() / 1000;
      const auto usecs = (cfg_.timeout.count() % 1000) * 1000;
      client.set_connection_timeout(secs, usecs);
      client.set_read_timeout(secs, usecs);
      client.set_write_timeout(secs, usecs);
      ++requests_;
      auto res = client.Post(url.path, body, "application/json");
      if (!res) {
        last_error = "request to " + cfg_.base_url + " failed: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500 || res->status == 429) {
        last_error = "HTTP " + std::to_string(res->status) + " from " + cfg_.base_url;
        continue;
      }
      if (res->status != 200)
        throw Error(ErrorCode::Transport, "HTTP " + std::to_string(res->status) + " from " + cfg_.base_url);
      try {
        const auto j = nlohmann::json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::MalformedResponse, "response: " + res->body);
      }
    }
    throw Error(ErrorCode::Transport, last_error + " (after " + std::to_string(cfg_.max_retries + 1) + " attempts)");
  }

  LlmEndpointConfig cfg_;
  LlmCache cache_;
  std::atomic<int> requests_{0};
};

inline TextSegmentSet llm_decompose(const std::string& raw, const LlmEndpointConfig& cfg) {
  LlmDecomposer decomposer(cfg);
  return decomposer.decompose(raw);
}

}  // namespace segalign
