// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "segalign/error.hpp"
#include "segalign/types.hpp"

namespace segalign {

enum class SegmentSource { Llm, Fallback, Dataset };

inline const char* to_string(SegmentSource s) {
  switch (s) {
    case SegmentSource::Llm: return "llm";
    case SegmentSource::Fallback: return "fallback";
    case SegmentSource::Dataset: return "dataset";
  }
  return "unknown";
}

struct TextSegmentSet {
  std::string raw_text;
  std::vector<std::string> segments;
  SegmentSource source = SegmentSource::Dataset;

  void validate(int max_segments = kMaxSegments) const {
    require(!segments.empty(), ErrorCode::Validation, "no segments in '" + raw_text + "'");
    require(static_cast<int>(segments.size()) <= max_segments, ErrorCode::Validation,
            std::to_string(segments.size()) + " segments exceed the maximum of " +
                std::to_string(max_segments) + " for '" + raw_text + "'");
    for (const auto& s : segments) {
      require(!s.empty(), ErrorCode::Validation, "empty segment in '" + raw_text + "'");
      require(s.find('#') == std::string::npos, ErrorCode::Validation, "segment contains '#': " + s);
    }
  }
};

// Instruction sent to the decomposition model; the raw description is
// appended after the final line.
inline constexpr std::string_view kSegmentPrompt =
    R"(You are a helpful assistant. Your task is to extract and temporally order human actions from a sentence describing a person performing one or more actions.

Guidelines:
- If the sentence describes **only one action**, return it as a full sentence without using the "#" symbol.
- If the sentence describes **multiple actions**, return each as a full sentence, in the correct temporal order, separated by the "#" symbol.
- Preserve descriptive modifiers such as "quickly", "slowly", "two times", "as if", "like", etc.
- Normalize expressions such as "appears to" or "seems to" into direct action statements.
- Do **not** include any extra text (e.g., "Output:", quotes, or explanations). Return only the result string in the specified format.

Examples:
(1) Input: a person runs quickly after walking in a circle.
    Output: a person walks in a circle#a person runs quickly.
    Comment: "walks" comes before "runs" due to the temporal cue "after".

(2) Input: a person jumps two times, then walks while waving the hands.
    Output: a person jumps two times#a person walks while waving the hands.
    Comment: "two times" is a modifier; "walks" and "waves the hands" occur simultaneously.

(3) Input: a person takes a box off the table and puts it on the floor.
    Output: a person takes a box off the table#a person puts a box on the floor.
    Comment: The sentence contains two sequential actions—taking the box and then putting it down.

(4) Input: a person is standing and waving the hands.
    Output: a person is standing and waving the hands.
    Comment: The sentence contains two simultaneous actions—standing and waving the hands.

(5) Input: a person is bowing left and right.
    Output: a person is bowing left and right.
    Comment: "left and right" is a descriptive modifier and should be preserved.

(6) Input: a person is jumping around like he is in an accident.
    Output: a person is jumping around like he is in an accident.
    Comment: "like he is in an accident" is a descriptive modifier and should be preserved.

(7) Input: a person appears to wave the hands.
    Output: a person waves the hands.
    Comment: "appears to" is not an action and is removed.

Now process the following input:)";

inline std::string build_segment_prompt(std::string_view raw) {
  std::string prompt(kSegmentPrompt);
  prompt += '\n';
  prompt += raw;
  return prompt;
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  return true;
}

// Splits on every occurrence of any delimiter, preferring the earliest match
// and, at equal positions, the longest delimiter.
inline std::vector<std::string> split_any(std::string_view s, const std::vector<std::string_view>& delims) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t best = std::string_view::npos, best_len = 0;
    for (auto d : delims) {
      const auto pos = s.find(d, start);
      if (pos == std::string_view::npos) continue;
      if (pos < best || (pos == best && d.size() > best_len)) {
        best = pos;
        best_len = d.size();
      }
    }
    if (best == std::string_view::npos) break;
    parts.emplace_back(s.substr(start, best - start));
    start = best + best_len;
  }
  parts.emplace_back(s.substr(start));
  return parts;
}

}  // namespace detail

// Splits a '#'-delimited model response. Each segment is trimmed and loses at
// most one trailing '.'; nothing else is rewritten.
inline TextSegmentSet parse_segment_string(std::string_view s, int max_segments = kMaxSegments) {
  require(!detail::trim(s).empty(), ErrorCode::Validation, "segment string is empty");
  TextSegmentSet set;
  set.raw_text = std::string(s);
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find('#', start);
    std::string seg = detail::trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (!seg.empty() && seg.back() == '.') seg = detail::trim(std::string_view(seg).substr(0, seg.size() - 1));
    set.segments.push_back(std::move(seg));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  set.validate(max_segments);
  return set;
}

inline std::string join_segments(const std::vector<std::string>& segments) {
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i) out += '#';
    out += segments[i];
  }
  return out;
}

// Rule-based decomposition for offline runs and tests. Not a model of the
// LLM's behavior: it splits on a fixed set of connectives, swaps "X after Y",
// and prefixes "a person " onto subject-less pieces.
inline TextSegmentSet fallback_decompose(std::string_view raw, int max_segments = kMaxSegments) {
  require(!detail::trim(raw).empty(), ErrorCode::Precondition, "raw text is empty");
  static const std::vector<std::string_view> kConnectives = {", and then ", ", then ", " and then ", " then "};
  static const std::array<std::string_view, 10> kSubjects = {"a ",  "an ",   "the ", "he ",      "she ",
                                                             "they ", "someone ", "person ", "somebody ", "it "};

  auto add_subject = [](std::string seg) {
    for (auto subj : kSubjects)
      if (detail::starts_with_ci(seg, subj)) return seg;
    return "a person " + seg;
  };

  TextSegmentSet set;
  set.raw_text = std::string(raw);
  set.source = SegmentSource::Fallback;
  for (const auto& piece : detail::split_any(raw, kConnectives)) {
    std::string p = detail::trim(piece);
    if (p.empty()) continue;
    const auto after = p.find(" after ");
    if (after != std::string::npos) {
      std::string later = detail::trim(std::string_view(p).substr(0, after));
      std::string earlier = detail::trim(std::string_view(p).substr(after + 7));
      if (!earlier.empty()) set.segments.push_back(add_subject(earlier));
      if (!later.empty()) set.segments.push_back(add_subject(later));
    } else {
      set.segments.push_back(add_subject(p));
    }
  }
  for (auto& seg : set.segments) std::replace(seg.begin(), seg.end(), '#', ' ');
  set.validate(max_segments);
  return set;
}

}  // namespace segalign
