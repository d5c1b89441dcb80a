#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "codewm/util.hpp"

namespace codewm {

class ParseFail : public Error {
 public:
  using Error::Error;
};

/// A model reply that does not have the expected structure; keeps the raw text.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

struct WmText {
  std::string reasoning;
  std::string html;
  friend bool operator==(const WmText&, const WmText&) = default;
};

/// Assistant-turn text: "Next State Reasoning: {r}\n\nHTML: {html}".
std::string format_wm_output(std::string_view reasoning, std::string_view html);

/// Splits a world-model reply. Reasoning runs from the first "Next State
/// Reasoning:" marker to the first later line-initial "HTML:"; the rest is
/// html with code fences stripped. Without markers, the largest suffix that
/// starts at a tag is html and the text before it is reasoning. Throws
/// ParseFail when no html can be found.
WmText parse_wm_output(std::string_view raw);

/// True when some line of `text` starts with "HTML:" (the assistant delimiter).
bool has_line_initial_html_marker(std::string_view text);

/// Finds the first JSON object in a reply, tolerating code fences and prose
/// around it. Returns nullopt when nothing parses.
std::optional<nlohmann::json> extract_json_object(std::string_view raw);

}  // namespace codewm
