#include "codewm/wmformat.hpp"

#include <algorithm>
#include <cctype>

namespace codewm {

using nlohmann::json;

namespace {

constexpr std::string_view kReasoningMarker = "Next State Reasoning:";
constexpr std::string_view kHtmlMarker = "HTML:";

std::size_t find_line_initial(std::string_view text, std::string_view marker, std::size_t from) {
  for (std::size_t p = text.find(marker, from); p != std::string_view::npos; p = text.find(marker, p + 1)) {
    if (p == 0 || text[p - 1] == '\n') return p;
  }
  return std::string_view::npos;
}

bool starts_tag(std::string_view s, std::size_t i) {
  if (s[i] != '<' || i + 1 >= s.size()) return false;
  const char c = s[i + 1];
  return std::isalpha(static_cast<unsigned char>(c)) || c == '!';
}

std::string clean_html(std::string_view rest) {
  // Canonical output has exactly one space after the marker; keep the rest
  // byte-exact unless it is fenced.
  if (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
  if (trim(rest).substr(0, 3) == "```") return strip_code_fences(rest);
  return std::string(rest);
}

bool has_tag(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (starts_tag(s, i)) return true;
  }
  return false;
}

WmText fallback_split(std::string_view text) {
  const std::string lower = to_lower(text);
  std::size_t start = std::string::npos;
  for (std::string_view anchor : {"<!doctype", "<html"}) {
    if (const auto p = lower.find(anchor); p != std::string::npos) {
      start = p;
      break;
    }
  }
  if (start == std::string::npos) {
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (starts_tag(text, i)) {
        start = i;
        break;
      }
    }
  }
  if (start == std::string::npos) throw ParseFail("no HTML found in reply");
  // An opening fence just before the document belongs to the html part.
  std::size_t cut = start;
  if (const auto fence = text.rfind("```", start); fence != std::string_view::npos) {
    const auto between = text.substr(fence + 3, start - fence - 3);
    if (std::all_of(between.begin(), between.end(),
                    [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || std::isspace(static_cast<unsigned char>(c)); })) {
      cut = fence;
    }
  }
  WmText out;
  out.reasoning = std::string(trim(text.substr(0, cut)));
  out.html = strip_code_fences(text.substr(cut));
  return out;
}

}  // namespace

std::string format_wm_output(std::string_view reasoning, std::string_view html) {
  std::string out;
  out.reserve(reasoning.size() + html.size() + 32);
  out += kReasoningMarker;
  out += ' ';
  out += reasoning;
  out += "\n\n";
  out += kHtmlMarker;
  out += ' ';
  out += html;
  return out;
}

bool has_line_initial_html_marker(std::string_view text) {
  return find_line_initial(text, kHtmlMarker, 0) != std::string_view::npos;
}

WmText parse_wm_output(std::string_view raw) {
  const auto r = raw.find(kReasoningMarker);
  const std::size_t body_from = r == std::string_view::npos ? 0 : r + kReasoningMarker.size();
  const auto h = find_line_initial(raw, kHtmlMarker, body_from);

  if (h != std::string_view::npos) {
    WmText out;
    std::string_view reasoning = raw.substr(body_from, h - body_from);
    if (r != std::string_view::npos && !reasoning.empty() && reasoning.front() == ' ') reasoning.remove_prefix(1);
    if (reasoning.size() >= 2 && reasoning.substr(reasoning.size() - 2) == "\n\n") {
      reasoning.remove_suffix(2);
    } else {
      reasoning = trim(reasoning);
    }
    out.reasoning = std::string(reasoning);
    out.html = clean_html(raw.substr(h + kHtmlMarker.size()));
    return out;
  }

  const std::string_view rest = raw.substr(body_from);
  if (!has_tag(rest)) throw ParseFail("reply has no HTML section");
  return fallback_split(rest);
}

std::optional<json> extract_json_object(std::string_view raw) {
  const std::string stripped = strip_code_fences(raw);
  try {
    auto j = json::parse(stripped);
    if (j.is_object()) return j;
  } catch (const json::exception&) {
  }
  // Scan each '{' for a balanced, string-aware span that parses.
  for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    int depth = 0;
    bool in_str = false, esc = false;
    for (std::size_t i = open; i < raw.size(); ++i) {
      const char c = raw[i];
      if (in_str) {
        if (esc) esc = false;
        else if (c == '\\') esc = true;
        else if (c == '"') in_str = false;
        continue;
      }
      if (c == '"') in_str = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        try {
          auto j = json::parse(raw.substr(open, i - open + 1));
          if (j.is_object()) return j;
        } catch (const json::exception&) {
        }
        break;
      }
    }
  }
  return std::nullopt;
}

}  // namespace codewm
