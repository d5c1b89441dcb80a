#include "codewm/datagen.hpp"

#include <fstream>
#include <future>
#include <mutex>

#include <spdlog/spdlog.h>

#include "codewm/annotate.hpp"
#include "codewm/prompts.hpp"

namespace codewm {

using nlohmann::json;

Strategy strategy_from_string(std::string_view s) {
  if (s == "ours") return Strategy::ours;
  if (s == "naive-state") return Strategy::naive_state;
  if (s == "naive-reasoning") return Strategy::naive_reasoning;
  throw Error("unknown strategy '" + std::string(s) + "' (ours, naive-state, naive-reasoning)");
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::ours: return "ours";
    case Strategy::naive_state: return "naive-state";
    case Strategy::naive_reasoning: return "naive-reasoning";
  }
  return "?";
}

namespace {

CodeState parse_code_state(const std::string& raw, const std::string& transition_id) {
  const auto j = extract_json_object(raw);
  if (!j || !j->contains("html") || !j->at("html").is_string()) {
    throw ParseError("relabel reply is not a {\"reasoning\",\"html\"} object", raw);
  }
  CodeState c;
  c.reasoning = j->contains("reasoning") && j->at("reasoning").is_string() ? j->at("reasoning").get<std::string>() : "";
  c.html = j->at("html").get<std::string>();
  c.source_transition_id = transition_id;
  const auto check = renderability_check(c.html);
  if (!check.pass) throw RenderabilityReject("relabeled html fails the renderability check: " + check.reason);
  return c;
}

// World-model prompt on (S_t, A_t); used by both naive strategies.
WmText naive_prediction(Gateway& gw, const std::string& frontier, const Transition& t) {
  ChatRequest req;
  req.parts = {MessagePart::of_image(t.s_t), MessagePart::of_text(prompts::world_model(action_prompt_text(t.action)))};
  req.max_output_tokens = kMaxOutputTokens;
  const auto raw = gw.chat(frontier, req);
  try {
    return parse_wm_output(raw);
  } catch (const ParseFail& e) {
    throw ParseError(e.what(), raw);
  }
}

}  // namespace

CodeState relabel_state(Gateway& gw, const std::string& frontier, const StateImage& image,
                        const std::string& transition_id, double retry_temperature) {
  ChatRequest req;
  req.parts = {MessagePart::of_image(image), MessagePart::of_text(std::string(prompts::kImgToCode))};
  req.max_output_tokens = kMaxOutputTokens;
  try {
    return parse_code_state(gw.chat(frontier, req), transition_id);
  } catch (const ParseError&) {
  } catch (const RenderabilityReject&) {
  }
  req.temperature = retry_temperature;
  return parse_code_state(gw.chat(frontier, req), transition_id);
}

std::optional<std::string> blocklist_violation(std::string_view text) {
  if (trim(text).empty()) return "empty";
  static const char* const kPhrases[] = {
      "red circle",  "crosshair",  "yellow dot",   "yellow center",     "center dot",
      "blue line",   "green start", "red end",     "annotation",        "annotated",
      "ground truth", "ground-truth", "second image", "second screenshot",
  };
  const std::string lower = to_lower(text);
  for (const char* p : kPhrases) {
    if (lower.find(p) != std::string::npos) return std::string(p);
  }
  return std::nullopt;
}

ReasoningTrace synthesize_reasoning(Gateway& gw, const std::string& frontier, const Transition& t,
                                    const StateImage& annotated_s_t) {
  ChatRequest req;
  req.parts = {MessagePart::of_text(prompts::look_ahead(action_prompt_text(t.action))),
               MessagePart::of_image(annotated_s_t), MessagePart::of_image(t.s_t1)};
  req.max_output_tokens = kMaxOutputTokens;
  std::string text{trim(gw.chat(frontier, req))};
  if (auto bad = blocklist_violation(text)) throw BlocklistReject("reasoning trace rejected: " + *bad);
  return {std::move(text), t.id};
}

SftSample build_sft_sample(const Transition& t, const ReasoningTrace& r, const CodeState& c,
                           const std::string& dataset) {
  if (has_line_initial_html_marker(r.text)) {
    throw BlocklistReject("reasoning contains the line-initial delimiter \"HTML:\"");
  }
  SftSample s;
  s.dataset = dataset;
  s.transition_id = t.id;
  s.id = dataset + "-" + t.id;
  s.image = t.s_t;
  s.user_text = prompts::world_model(action_prompt_text(t.action));
  s.assistant_text = format_wm_output(r.text, c.html);
  return s;
}

json SftSample::to_json(const std::filesystem::path& base_dir) const {
  return {{"id", id},
          {"dataset", dataset},
          {"transition_id", transition_id},
          {"messages",
           json::array({{{"role", "user"},
                         {"content", json::array({{{"type", "image"}, {"image", portable_path(image.image_ref, base_dir)}},
                                                  {{"type", "text"}, {"text", user_text}}})}},
                        {{"role", "assistant"}, {"content", assistant_text}}})}};
}

json Rejection::to_json() const {
  return {{"transition_id", transition_id}, {"stage", stage}, {"reason", reason}, {"detail", detail}};
}

double DatasetResult::renderable_rate() const {
  return transitions == 0 ? 0.0 : static_cast<double>(renderable) / static_cast<double>(transitions);
}

json DatasetResult::summary() const {
  json j{{"transitions", transitions},
         {"samples", samples.size()},
         {"rejected", rejections.size()},
         {"renderable", renderable},
         {"renderable_rate", renderable_rate()}};
  if (rendered > 0) {
    j["rendered"] = rendered;
    j["rendered_ok"] = rendered_ok;
    j["rendered_ok_rate"] = static_cast<double>(rendered_ok) / static_cast<double>(rendered);
  }
  return j;
}

DatasetResult generate_dataset(const std::vector<Episode>& episodes, Gateway& gw, const DatagenConfig& cfg,
                               Renderer* renderer) {
  if (!gw.has_endpoint(cfg.frontier)) throw ConfigError("unknown frontier endpoint '" + cfg.frontier + "'");
  std::vector<Transition> all;
  for (const auto& e : episodes) {
    auto ts = to_transitions(e);
    all.insert(all.end(), std::make_move_iterator(ts.begin()), std::make_move_iterator(ts.end()));
  }
  std::sort(all.begin(), all.end(), [](const Transition& a, const Transition& b) { return a.id < b.id; });

  std::filesystem::create_directories(cfg.work_dir);
  std::mutex ledger_mu;
  std::ofstream ledger(cfg.work_dir / "progress.jsonl", std::ios::app);

  struct Outcome {
    std::optional<SftSample> sample;
    std::optional<Rejection> rejection;
    bool renderable = false;
    bool rendered = false;
    bool rendered_ok = false;
  };
  std::vector<Outcome> outcomes(all.size());

  parallel_for(all.size(), static_cast<std::size_t>(std::max(1, cfg.workers)), [&](std::size_t i) {
    const Transition& t = all[i];
    Outcome& out = outcomes[i];
    auto reject = [&](std::string stage, std::string reason, std::string detail) {
      out.rejection = Rejection{t.id, std::move(stage), std::move(reason), std::move(detail)};
    };

    // Steps (2) and (3) are independent; run the relabel on a second thread.
    auto code_future = std::async(std::launch::async, [&]() -> CodeState {
      if (cfg.strategy == Strategy::naive_state) {
        auto wm = naive_prediction(gw, cfg.frontier, t);
        const auto check = renderability_check(wm.html);
        if (!check.pass) throw RenderabilityReject("predicted html fails the renderability check: " + check.reason);
        return {wm.reasoning, wm.html, t.id};
      }
      return relabel_state(gw, cfg.frontier, t.s_t1, t.id, cfg.retry_temperature);
    });

    std::optional<ReasoningTrace> trace;
    std::string reasoning_error, reasoning_reason;
    try {
      if (cfg.strategy == Strategy::naive_reasoning) {
        auto wm = naive_prediction(gw, cfg.frontier, t);
        std::string text{trim(wm.reasoning)};
        if (auto bad = blocklist_violation(text)) throw BlocklistReject("reasoning trace rejected: " + *bad);
        trace = ReasoningTrace{std::move(text), t.id};
      } else {
        const auto annotated = annotate_action(t.s_t, t.action, cfg.work_dir / "annotated" / (t.id + ".png"));
        trace = synthesize_reasoning(gw, cfg.frontier, t, annotated);
      }
    } catch (const BlocklistReject& e) {
      reasoning_reason = "blocklist";
      reasoning_error = e.what();
    } catch (const ParseError& e) {
      reasoning_reason = "parse";
      reasoning_error = e.what();
    } catch (const AuthError&) {
      throw;
    } catch (const EndpointError& e) {
      reasoning_reason = "endpoint";
      reasoning_error = e.what();
    }

    std::optional<CodeState> code;
    try {
      code = code_future.get();
      out.renderable = true;
    } catch (const ParseError& e) {
      reject("relabel", "parse", e.what());
    } catch (const RenderabilityReject& e) {
      reject("relabel", "renderability", e.what());
    } catch (const AuthError&) {
      throw;
    } catch (const EndpointError& e) {
      reject("relabel", "endpoint", e.what());
    }
    if (!out.rejection && !trace) reject("reasoning", reasoning_reason, reasoning_error);
    if (!out.rejection) {
      try {
        out.sample = build_sft_sample(t, *trace, *code, cfg.dataset);
      } catch (const BlocklistReject& e) {
        reject("assemble", "delimiter", e.what());
      }
    }
    if (out.sample && renderer) {
      const auto vp = Viewport::for_screenshot(t.s_t1.width_px, t.s_t1.height_px);
      const auto res = renderer->render(code->html, vp, cfg.work_dir / "renders" / (t.id + ".png"));
      out.rendered = true;
      out.rendered_ok = res.verdict == RenderVerdict::ok;
      if (!out.rendered_ok) {
        reject("render", std::string(to_string(res.verdict)), res.detail);
        out.sample.reset();
      }
    }
    std::lock_guard lock(ledger_mu);
    ledger << json{{"transition_id", t.id}, {"status", out.sample ? "sample" : "rejected"}}.dump() << '\n';
    ledger.flush();
  });

  DatasetResult result;
  result.transitions = all.size();
  for (auto& o : outcomes) {
    if (o.renderable) ++result.renderable;
    if (o.rendered) ++result.rendered;
    if (o.rendered_ok) ++result.rendered_ok;
    if (o.sample) result.samples.push_back(std::move(*o.sample));
    if (o.rejection) result.rejections.push_back(std::move(*o.rejection));
  }
  spdlog::info("datagen: {} transitions, {} samples, {} rejected", result.transitions, result.samples.size(),
               result.rejections.size());
  return result;
}

void write_dataset(const DatasetResult& result, const std::filesystem::path& out,
                   const std::filesystem::path& report) {
  const auto base = out.parent_path();
  std::string body;
  for (const auto& s : result.samples) body += s.to_json(base).dump() + "\n";
  write_file_atomic(out, body);
  if (!report.empty()) {
    std::string rep;
    for (const auto& r : result.rejections) rep += r.to_json().dump() + "\n";
    write_file_atomic(report, rep);
  }
}

}  // namespace codewm
