#include "codewm/policy.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <random>
#include <regex>

#include <spdlog/spdlog.h>

#include "codewm/eval.hpp"
#include "codewm/prompts.hpp"
#include "codewm/wmformat.hpp"

namespace codewm {

using nlohmann::json;

void PolicySample::validate() const {
  if (id.empty()) throw Error("policy sample without id");
  gt_action.validate();
  if (!expressible_in(gt_action, ActionSchema::m3a)) {
    throw SchemaMismatch("sample " + id + ": ground-truth action has no m3a form");
  }
}

PolicySample PolicySample::from_json(const json& j, const std::filesystem::path& base_dir) {
  PolicySample s;
  s.id = j.at("id").get<std::string>();
  s.s_t = StateImage::from_file(resolve_path(j.at("image").get<std::string>(), base_dir));
  s.gt_action = parse_action(j.at("action"));
  s.goal = j.value("goal", "");
  s.history = j.value("history", std::vector<std::string>{});
  s.gt_reason = j.value("gt_reason", "N/A");
  s.validate();
  return s;
}

std::vector<PolicySample> load_policy_samples(const std::filesystem::path& path) {
  std::vector<PolicySample> out;
  const auto base = path.parent_path();
  for (const auto& [line_no, line] : read_numbered_lines(path)) {
    try {
      out.push_back(PolicySample::from_json(json::parse(line), base));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::string history_text(const PolicySample& s) {
  std::string h;
  for (const auto& x : s.history) h += (h.empty() ? "" : "; ") + x;
  return h.empty() ? std::string("None") : h;
}

}  // namespace

bool duplicates_ground_truth(const CanonicalAction& gt, const CanonicalAction& c, int tolerance) {
  if (gt.kind != c.kind) return false;
  auto near = [&](const std::optional<GridPoint>& a, const std::optional<GridPoint>& b) {
    if (!a || !b) return a.has_value() == b.has_value();
    return std::abs(a->x - b->x) <= tolerance && std::abs(a->y - b->y) <= tolerance;
  };
  if (gt.point || c.point) return near(gt.point, c.point) && near(gt.end_point, c.end_point);
  return gt.direction == c.direction && gt.text == c.text && gt.app_name == c.app_name;
}

namespace {

std::string clean_reason(std::string_view s) {
  std::string r(trim(s));
  while (!r.empty() && (r.back() == ',' || r.back() == '"' || r.back() == '\'')) r.pop_back();
  while (!r.empty() && (r.front() == '"' || r.front() == '\'')) r.erase(r.begin());
  return std::string(trim(r));
}

// End of the brace-balanced object starting at `open`, string-aware.
std::size_t object_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_str = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_str = false;
      }
      continue;
    }
    if (c == '"') in_str = true;
    if (c == '{') ++depth;
    if (c == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

std::optional<std::vector<Candidate>> parse_strict(std::string_view raw) {
  json j;
  try {
    j = json::parse(strip_code_fences(raw));
  } catch (const json::exception&) {
    return std::nullopt;
  }
  if (!j.is_object()) return std::nullopt;
  std::vector<std::pair<int, Candidate>> items;
  for (const auto& [key, v] : j.items()) {
    int n = 0;
    try {
      n = std::stoi(key);
    } catch (const std::exception&) {
      return std::nullopt;
    }
    if (!v.is_object()) return std::nullopt;
    const json* action = nullptr;
    std::string reason;
    for (const auto& [k2, v2] : v.items()) {
      if (to_lower(k2) == "action") action = &v2;
      if (to_lower(k2) == "reason" && v2.is_string()) reason = v2.get<std::string>();
    }
    if (!action) return std::nullopt;
    items.push_back({n, {parse_action(*action, ActionSchema::m3a), reason}});
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Candidate> out;
  for (auto& [n, c] : items) out.push_back(std::move(c));
  return out;
}

}  // namespace

std::vector<Candidate> parse_alternatives(std::string_view raw) {
  try {
    if (auto strict = parse_strict(raw)) return *strict;
  } catch (const Error& e) {
    throw ParseError(std::string("alternatives: ") + e.what(), std::string(raw));
  }
  static const std::regex action_key(R"re(["']?\bAction["']?\s*:\s*\{)re", std::regex::icase);
  static const std::regex reason_key(R"re(["']?\bReason["']?\s*:)re", std::regex::icase);
  std::vector<Candidate> out;
  std::size_t pos = 0;
  const std::string text(raw);
  std::smatch m;
  while (pos < text.size() && std::regex_search(text.begin() + static_cast<std::ptrdiff_t>(pos), text.end(), m, action_key)) {
    const std::size_t key_at = pos + static_cast<std::size_t>(m.position(0));
    const std::size_t open = pos + static_cast<std::size_t>(m.position(0) + m.length(0)) - 1;
    const std::size_t end = object_end(text, open);
    if (end == std::string_view::npos) throw ParseError("alternatives: unbalanced action object", text);
    Candidate c;
    try {
      c.action = parse_action(json::parse(text.substr(open, end - open)), ActionSchema::m3a);
    } catch (const std::exception& e) {
      throw ParseError(std::string("alternatives: bad action: ") + e.what(), text);
    }
    // The reason is the last "Reason:" between the previous action and this one.
    const std::string segment = text.substr(pos, key_at - pos);
    std::size_t reason_from = std::string::npos;
    for (auto it = std::sregex_iterator(segment.begin(), segment.end(), reason_key); it != std::sregex_iterator(); ++it) {
      reason_from = static_cast<std::size_t>(it->position(0) + it->length(0));
    }
    if (reason_from != std::string::npos) c.reason = clean_reason(std::string_view(segment).substr(reason_from));
    out.push_back(std::move(c));
    pos = end;
  }
  return out;
}

std::vector<Candidate> gen_alternatives(Gateway& gw, const std::string& policy, const PolicySample& s, int k,
                                        double retry_temperature) {
  if (k < 2) throw Error("K must be at least 2");
  ChatRequest req;
  req.parts = {MessagePart::of_image(s.s_t),
               MessagePart::of_text(
                   prompts::alternatives(s.goal, history_text(s), action_prompt_text(s.gt_action), k - 1))};
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (attempt == 1) req.temperature = retry_temperature;
    const auto raw = gw.chat(policy, req);
    auto alts = parse_alternatives(raw);
    if (alts.size() != static_cast<std::size_t>(k - 1)) {
      throw ParseError("alternatives: expected " + std::to_string(k - 1) + " actions, got " + std::to_string(alts.size()),
                       raw);
    }
    const bool dup = std::any_of(alts.begin(), alts.end(),
                                 [&](const Candidate& c) { return duplicates_ground_truth(s.gt_action, c.action); });
    if (!dup) return alts;
    spdlog::debug("sample {}: alternative duplicates the ground truth (attempt {})", s.id, attempt + 1);
  }
  throw DuplicateOfGroundTruth("sample " + s.id + ": alternatives repeat the ground-truth action after a re-request");
}

std::string format_candidates(const std::vector<Candidate>& candidates) {
  std::string out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out += "\n" + std::to_string(i + 1) + ": " + action_prompt_text(candidates[i].action);
  }
  return out;
}

int parse_best(std::string_view raw, int k) {
  static const std::regex best(R"(Best\s*:\s*\**\s*(-?\d+))", std::regex::icase);
  const std::string text(raw);
  std::optional<long> n;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), best); it != std::sregex_iterator(); ++it) {
    n = std::stol((*it)[1].str());
  }
  if (!n) throw ParseError("selection: no 'Best: <n>' line", text);
  if (*n < 1 || *n > k) {
    throw IndexOutOfRange("selection index " + std::to_string(*n) + " outside [1," + std::to_string(k) + "]");
  }
  return static_cast<int>(*n);
}

int select_action(Gateway& gw, const std::string& policy, const PolicySample& s,
                  const std::vector<Candidate>& candidates) {
  ChatRequest req;
  req.parts = {MessagePart::of_image(s.s_t),
               MessagePart::of_text(prompts::select(s.goal, history_text(s), format_candidates(candidates)))};
  return parse_best(gw.chat(policy, req), static_cast<int>(candidates.size()));
}

json ValueVerdict::to_json() const {
  json j{{"judgement", valid ? "valid" : "invalid"}, {"confidence", confidence}, {"reason", reason}};
  if (!flag.empty()) j["flag"] = flag;
  return j;
}

ValueVerdict parse_value_verdict(std::string_view raw) {
  ValueVerdict v;
  const auto j = extract_json_object(raw);
  auto field = [&](const char* name) -> const json* {
    if (!j) return nullptr;
    for (const auto& [k, val] : j->items()) {
      if (to_lower(k) == name) return &val;
    }
    return nullptr;
  };
  const json* judgement = field("judgement");
  const json* confidence = field("confidence");
  if (!judgement || !judgement->is_string() || !confidence) {
    v.flag = "unparseable";
    return v;
  }
  const auto jt = to_lower(trim(judgement->get<std::string>()));
  double c = 0;
  if (confidence->is_number()) {
    c = confidence->get<double>();
  } else if (confidence->is_string()) {
    try {
      c = std::stod(confidence->get<std::string>());
    } catch (const std::exception&) {
      v.flag = "unparseable";
      return v;
    }
  } else {
    v.flag = "unparseable";
    return v;
  }
  if ((jt != "valid" && jt != "invalid") || !std::isfinite(c)) {
    v.flag = "unparseable";
    return v;
  }
  v.valid = jt == "valid";
  if (c < 0.0 || c > 1.0) {
    c = std::clamp(c, 0.0, 1.0);
    v.flag = "clamped";
  }
  v.confidence = c;
  if (const json* r = field("reason"); r && r->is_string()) v.reason = r->get<std::string>();
  return v;
}

ValueVerdict estimate_value(Gateway& gw, const std::string& policy, const PolicySample& s, const Candidate& c,
                            const std::optional<StateImage>& pred_shot) {
  const auto action = action_prompt_text(c.action);
  const auto reason = c.reason.empty() ? std::string("N/A") : c.reason;
  ChatRequest req;
  if (pred_shot) {
    req.parts = {MessagePart::of_text(prompts::value_wm(s.goal, history_text(s), action, reason)),
                 MessagePart::of_image(s.s_t), MessagePart::of_image(*pred_shot)};
  } else {
    req.parts = {MessagePart::of_text(prompts::value_no_wm(s.goal, history_text(s), action, reason)),
                 MessagePart::of_image(s.s_t)};
  }
  return parse_value_verdict(gw.chat(policy, req));
}

std::string_view to_string(SelectionRule r) {
  switch (r) {
    case SelectionRule::argmax_valid: return "argmax_valid";
    case SelectionRule::tie_break: return "tie_break";
    case SelectionRule::all_invalid_fallback: return "all_invalid_fallback";
  }
  return "argmax_valid";
}

ValueSelection select_by_value(const std::vector<ValueVerdict>& verdicts) {
  if (verdicts.empty()) throw Error("select_by_value: no verdicts");
  const bool any_valid = std::any_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.valid; });
  std::optional<std::size_t> best;
  std::size_t ties = 0;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    if (any_valid && !verdicts[i].valid) continue;
    if (!best || verdicts[i].confidence > verdicts[*best].confidence) {
      best = i;
      ties = 0;
    } else if (verdicts[i].confidence == verdicts[*best].confidence) {
      ++ties;
    }
  }
  ValueSelection sel{*best, SelectionRule::argmax_valid};
  if (!any_valid) {
    sel.rule = SelectionRule::all_invalid_fallback;
  } else if (ties > 0) {
    sel.rule = SelectionRule::tie_break;
  }
  return sel;
}

PolicyMode policy_mode_from_string(std::string_view s) {
  if (s == "oracle") return PolicyMode::oracle;
  if (s == "value_no_wm" || s == "value-no-wm") return PolicyMode::value_no_wm;
  if (s == "value_with_wm" || s == "value-with-wm") return PolicyMode::value_with_wm;
  throw ConfigError("unknown policy mode '" + std::string(s) + "'");
}

std::string_view to_string(PolicyMode m) {
  switch (m) {
    case PolicyMode::oracle: return "oracle";
    case PolicyMode::value_no_wm: return "value_no_wm";
    case PolicyMode::value_with_wm: return "value_with_wm";
  }
  return "oracle";
}

json PolicySampleLog::to_json() const {
  json cands = json::array();
  for (const auto& c : candidates) {
    cands.push_back({{"action", serialize_action(c.action, ActionSchema::m3a)}, {"reason", c.reason}});
  }
  json verd = json::array();
  for (const auto& v : verdicts) verd.push_back(v.to_json());
  json j{{"sample_id", sample_id}, {"candidates", cands}, {"verdicts", verd}, {"rule", rule}, {"correct", correct}};
  if (!presented.empty()) j["presented"] = presented;
  j["selected"] = selected ? json(*selected + 1) : json(nullptr);
  if (!error.empty()) j["error"] = error;
  return j;
}

json PolicyEvalResult::summary(const PolicyEvalConfig& cfg) const {
  std::map<std::string, int> rules;
  for (const auto& l : log) {
    if (!l.rule.empty()) ++rules[l.rule];
  }
  return {{"mode", to_string(cfg.mode)}, {"policy", cfg.policy}, {"wm", cfg.wm}, {"k", cfg.k},
          {"shuffle", cfg.shuffle},    {"samples", log.size()},  {"accuracy", accuracy},
          {"errors", errors},          {"rules", rules}};
}

namespace {

void evaluate_sample(const PolicySample& s, Gateway& gw, Renderer* renderer, const PolicyEvalConfig& cfg,
                     PolicySampleLog& log) {
  log.candidates.push_back({s.gt_action, s.gt_reason});
  for (auto& alt : gen_alternatives(gw, cfg.policy, s, cfg.k, cfg.retry_temperature)) {
    log.candidates.push_back(std::move(alt));
  }

  if (cfg.mode == PolicyMode::oracle) {
    std::vector<std::size_t> order(log.candidates.size());
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle) {
      const auto h = sha256_hex(s.id + "\n" + std::to_string(cfg.seed));
      std::mt19937_64 rng(std::stoull(h.substr(0, 16), nullptr, 16));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> d(0, i - 1);
        std::swap(order[i - 1], order[d(rng)]);
      }
      log.presented = order;
    }
    std::vector<Candidate> shown;
    for (auto i : order) shown.push_back(log.candidates[i]);
    const int best = select_action(gw, cfg.policy, s, shown);
    log.selected = order[static_cast<std::size_t>(best - 1)];
    log.rule = "select";
  } else {
    std::vector<std::future<ValueVerdict>> futures;
    for (std::size_t i = 0; i < log.candidates.size(); ++i) {
      futures.push_back(std::async(std::launch::async, [&, i] {
        const Candidate& c = log.candidates[i];
        if (cfg.mode == PolicyMode::value_no_wm) return estimate_value(gw, cfg.policy, s, c, std::nullopt);
        const auto shot_path = cfg.work_dir / "rollouts" / (s.id + "-" + std::to_string(i + 1) + ".png");
        const auto pred = predict_next_state(gw, cfg.wm, s.s_t, c.action, s.s_t, *renderer, shot_path);
        if (pred.render_failed) {
          ValueVerdict v;
          v.flag = "render_fail";
          v.reason = pred.fail_reason;
          return v;
        }
        return estimate_value(gw, cfg.policy, s, c, pred.render->screenshot);
      }));
    }
    std::exception_ptr first_error;
    for (auto& f : futures) {
      try {
        log.verdicts.push_back(f.get());
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
    const auto sel = select_by_value(log.verdicts);
    log.selected = sel.index;
    log.rule = std::string(to_string(sel.rule));
  }
  log.correct = log.selected == 0u;
}

}  // namespace

PolicyEvalResult run_policy_eval(const std::vector<PolicySample>& samples, Gateway& gw, Renderer* renderer,
                                 const PolicyEvalConfig& cfg) {
  if (cfg.k < 2) throw ConfigError("K must be at least 2");
  if (!gw.has_endpoint(cfg.policy)) throw ConfigError("unknown policy endpoint '" + cfg.policy + "'");
  if (cfg.mode == PolicyMode::value_with_wm) {
    if (cfg.wm.empty() || !gw.has_endpoint(cfg.wm)) throw ConfigError("value_with_wm needs a configured world model");
    if (!renderer) throw ConfigError("value_with_wm needs a renderer");
  }
  PolicyEvalResult res;
  res.log.resize(samples.size());
  parallel_for(samples.size(), static_cast<std::size_t>(std::max(1, cfg.workers)), [&](std::size_t i) {
    auto& log = res.log[i];
    log.sample_id = samples[i].id;
    try {
      evaluate_sample(samples[i], gw, renderer, cfg, log);
    } catch (const AuthError&) {
      throw;
    } catch (const Error& e) {
      spdlog::warn("policy sample {}: {}", samples[i].id, e.what());
      log.error = e.what();
      log.selected.reset();
      log.correct = false;
    }
  });
  std::size_t correct = 0;
  for (const auto& l : res.log) {
    correct += l.correct ? 1 : 0;
    res.errors += l.error.empty() ? 0 : 1;
  }
  res.accuracy = samples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(samples.size());
  return res;
}

}  // namespace codewm
