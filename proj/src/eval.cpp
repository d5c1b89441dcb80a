#include "codewm/eval.hpp"

#include <future>
#include <sstream>

#include <spdlog/spdlog.h>

#include "codewm/prompts.hpp"

namespace codewm {

using nlohmann::json;

WMOutput predict_next_state(Gateway& gw, const std::string& wm, const StateImage& s_t, const CanonicalAction& action,
                            const StateImage& size_like, Renderer& renderer, const std::filesystem::path& shot_out) {
  ChatRequest req;
  req.parts = {MessagePart::of_image(s_t), MessagePart::of_text(prompts::world_model(action_prompt_text(action)))};
  req.max_output_tokens = kMaxOutputTokens;
  WMOutput out;
  out.raw = gw.chat(wm, req);
  try {
    auto parsed = parse_wm_output(out.raw);
    out.reasoning = std::move(parsed.reasoning);
    out.html = std::move(parsed.html);
  } catch (const ParseFail&) {
    out.fail_reason = "parse_fail";
    return out;
  }
  const auto check = renderability_check(out.html);
  if (!check.pass) {
    out.fail_reason = "parse_fail:" + check.reason;
    return out;
  }
  out.render = renderer.render(out.html, Viewport::for_screenshot(size_like.width_px, size_like.height_px), shot_out);
  out.render_failed = out.render->verdict != RenderVerdict::ok;
  if (out.render_failed) out.fail_reason = std::string(to_string(out.render->verdict));
  return out;
}

JudgeVerdict judge_once(Gateway& gw, const std::string& judge, const Transition& t, const StateImage& pred_shot) {
  ChatRequest req;
  req.parts = {MessagePart::of_text(prompts::judge(action_prompt_text(t.action))), MessagePart::of_image(t.s_t),
               MessagePart::of_image(pred_shot)};
  const auto raw = gw.chat(judge, req);
  JudgeVerdict v;
  const auto j = extract_json_object(raw);
  if (!j || !j->contains("Status") || !j->at("Status").is_string()) {
    v.parse_flag = true;
    v.thoughts = raw;
    return v;
  }
  const auto status = to_lower(trim(j->at("Status").get<std::string>()));
  if (status != "success" && status != "failure") {
    v.parse_flag = true;
  }
  v.success = status == "success";
  if (j->contains("Thoughts") && j->at("Thoughts").is_string()) v.thoughts = j->at("Thoughts").get<std::string>();
  return v;
}

double aggregate_iacc(const std::vector<bool>& panel, bool render_failed) {
  if (render_failed) return 0.0;
  if (panel.empty()) throw Error("aggregate_iacc: empty judge panel");
  std::size_t ok = 0;
  for (bool b : panel) ok += b ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(panel.size());
}

SimilarityResult similarity(Gateway& gw, const StateImage& a, const StateImage& b,
                            const std::vector<std::string>& providers) {
  if (providers.empty()) throw ConfigError("similarity needs at least one embedding provider");
  SimilarityResult r;
  double sum = 0;
  for (const auto& p : providers) {
    const double c = cosine(gw.embed(p, a), gw.embed(p, b));
    r.per_provider[p] = c;
    sum += c;
  }
  r.mean = sum / static_cast<double>(providers.size());
  return r;
}

namespace {

json sim_to_json(const SimilarityResult& s) { return {{"mean", s.mean}, {"per_provider", s.per_provider}}; }

SimilarityResult sim_from_json(const json& j) {
  SimilarityResult s;
  s.mean = j.at("mean").get<double>();
  s.per_provider = j.at("per_provider").get<std::map<std::string, double>>();
  return s;
}

}  // namespace

void finalize_report(BenchmarkReport& r) {
  const double n = static_cast<double>(r.rows.size());
  r.iacc_pct = r.render_fail_pct = r.similarity_pct = 0;
  r.similarity_per_provider_pct.clear();
  r.iacc_per_judge_pct.clear();
  r.judge_parse_flags = 0;
  r.sample_errors = 0;
  if (r.rows.empty()) return;
  double iacc = 0, fails = 0, sim = 0, sim_n = 0;
  std::map<std::string, double> per_provider, per_judge;
  for (const auto& row : r.rows) {
    iacc += row.iacc_contrib;
    if (row.render_failed) fails += 1;
    if (!row.error.empty()) ++r.sample_errors;
    if (row.sim_pred) {
      sim += row.sim_pred->mean;
      sim_n += 1;
      for (const auto& [p, v] : row.sim_pred->per_provider) per_provider[p] += v;
    }
    for (const auto& [j, v] : row.per_judge) {
      per_judge[j] += v.success ? 1.0 : 0.0;
      if (v.parse_flag) ++r.judge_parse_flags;
    }
  }
  r.iacc_pct = 100.0 * iacc / n;
  r.render_fail_pct = 100.0 * fails / n;
  r.similarity_pct = sim_n > 0 ? 100.0 * sim / sim_n : 0.0;
  for (const auto& [p, v] : per_provider) r.similarity_per_provider_pct[p] = 100.0 * v / sim_n;
  // Per-judge IAcc keeps render fails in the denominator, like the panel score.
  for (const auto& [j, v] : per_judge) r.iacc_per_judge_pct[j] = 100.0 * v / n;
}

json BenchmarkReport::to_json() const {
  json rows_j = json::array();
  for (const auto& row : rows) {
    json judges = json::object();
    for (const auto& [id, v] : row.per_judge) {
      judges[id] = {{"status", v.success ? "success" : "failure"}, {"thoughts", v.thoughts}, {"parse_flag", v.parse_flag}};
    }
    json rj{{"transition_id", row.transition_id},
            {"render_failed", row.render_failed},
            {"fail_reason", row.fail_reason},
            {"viewport", row.viewport},
            {"judges", judges},
            {"iacc_contrib", row.iacc_contrib},
            {"sim_copy", sim_to_json(row.sim_copy)}};
    if (!row.error.empty()) rj["error"] = row.error;
    rj["sim_pred"] = row.sim_pred ? sim_to_json(*row.sim_pred) : json(nullptr);
    rows_j.push_back(std::move(rj));
  }
  return {{"schema_version", kReportSchemaVersion},
          {"bench", bench},
          {"config", config},
          {"n", rows.size()},
          {"iacc_pct", iacc_pct},
          {"render_fail_pct", render_fail_pct},
          {"similarity_pct", similarity_pct},
          {"similarity_per_provider_pct", similarity_per_provider_pct},
          {"iacc_per_judge_pct", iacc_per_judge_pct},
          {"judge_parse_flags", judge_parse_flags},
          {"sample_errors", sample_errors},
          {"rows", rows_j}};
}

BenchmarkReport BenchmarkReport::from_json(const json& j) {
  if (j.value("schema_version", 0) != kReportSchemaVersion) {
    throw Error("unsupported report schema_version " + std::to_string(j.value("schema_version", 0)));
  }
  BenchmarkReport r;
  r.bench = j.value("bench", "");
  r.config = j.value("config", json::object());
  for (const auto& rj : j.at("rows")) {
    SampleRow row;
    row.transition_id = rj.at("transition_id").get<std::string>();
    row.render_failed = rj.at("render_failed").get<bool>();
    row.fail_reason = rj.value("fail_reason", "");
    row.viewport = rj.value("viewport", "");
    for (const auto& [id, v] : rj.at("judges").items()) {
      row.per_judge[id] = {v.at("status") == "success", v.value("thoughts", ""), v.value("parse_flag", false)};
    }
    row.iacc_contrib = rj.at("iacc_contrib").get<double>();
    row.error = rj.value("error", "");
    row.sim_copy = sim_from_json(rj.at("sim_copy"));
    if (!rj.at("sim_pred").is_null()) row.sim_pred = sim_from_json(rj.at("sim_pred"));
    r.rows.push_back(std::move(row));
  }
  finalize_report(r);
  return r;
}

std::string BenchmarkReport::table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %8s %12s %11s\n", "Benchmark", "IAcc.", "Render Fail", "Similarity");
  os << line;
  std::snprintf(line, sizeof line, "%-24s %8.2f %12.2f %11.2f\n", bench.c_str(), iacc_pct, render_fail_pct,
                similarity_pct);
  os << line;
  if (!iacc_per_judge_pct.empty()) {
    os << "\nPer-judge IAcc.\n";
    for (const auto& [j, v] : iacc_per_judge_pct) {
      std::snprintf(line, sizeof line, "  %-22s %8.2f\n", j.c_str(), v);
      os << line;
    }
  }
  if (similarity_per_provider_pct.size() > 1) {
    os << "\nPer-provider similarity\n";
    for (const auto& [p, v] : similarity_per_provider_pct) {
      std::snprintf(line, sizeof line, "  %-22s %8.2f\n", p.c_str(), v);
      os << line;
    }
  }
  if (judge_parse_flags > 0) os << "\n" << judge_parse_flags << " judge replies were unparseable (scored as failure)\n";
  if (sample_errors > 0) os << sample_errors << " samples failed on endpoint errors (scored as failure)\n";
  return os.str();
}

namespace {

void score_sample(Gateway& gw, Renderer& renderer, const EvalConfig& cfg, const Transition& t, SampleRow& row) {
  const auto pred = predict_next_state(gw, cfg.wm, t.s_t, t.action, t.s_t1, renderer,
                                       cfg.work_dir / "renders" / (t.id + ".png"));
  row.render_failed = pred.render_failed;
  row.fail_reason = pred.fail_reason;
  if (row.render_failed) {
    row.iacc_contrib = aggregate_iacc({}, true);
    return;
  }
  const StateImage shot = *pred.render->screenshot;
  auto sim_future = std::async(std::launch::async, [&] { return similarity(gw, shot, t.s_t1, cfg.providers); });
  std::vector<std::future<JudgeVerdict>> verdicts;
  for (const auto& j : cfg.judges) {
    verdicts.push_back(std::async(std::launch::async, [&gw, &t, &shot, j] { return judge_once(gw, j, t, shot); }));
  }
  std::vector<bool> panel;
  std::exception_ptr first_error;
  for (std::size_t k = 0; k < cfg.judges.size(); ++k) {
    try {
      row.per_judge[cfg.judges[k]] = verdicts[k].get();
      panel.push_back(row.per_judge[cfg.judges[k]].success);
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  row.sim_pred = sim_future.get();
  if (first_error) std::rethrow_exception(first_error);
  row.iacc_contrib = aggregate_iacc(panel, false);
}

}  // namespace

BenchmarkReport run_benchmark(const std::vector<Transition>& bench, Gateway& gw, Renderer& renderer,
                              const EvalConfig& cfg) {
  if (!gw.has_endpoint(cfg.wm)) throw ConfigError("unknown world-model endpoint '" + cfg.wm + "'");
  if (cfg.judges.empty()) throw ConfigError("at least one judge is required");
  for (const auto& j : cfg.judges) {
    if (!gw.has_endpoint(j)) throw ConfigError("unknown judge endpoint '" + j + "'");
  }
  for (const auto& p : cfg.providers) {
    if (!gw.has_embedder(p)) throw ConfigError("unknown embedding provider '" + p + "'");
  }

  BenchmarkReport report;
  report.bench = cfg.bench;
  report.config = {{"wm", cfg.wm}, {"judges", cfg.judges}, {"providers", cfg.providers},
                   {"max_output_tokens", kMaxOutputTokens}, {"temperature", 0.0},
                   {"viewport", "ground-truth screenshot size per sample"}};
  report.rows.resize(bench.size());

  parallel_for(bench.size(), static_cast<std::size_t>(std::max(1, cfg.workers)), [&](std::size_t i) {
    const Transition& t = bench[i];
    SampleRow& row = report.rows[i];
    row.transition_id = t.id;
    row.viewport = Viewport::for_screenshot(t.s_t1.width_px, t.s_t1.height_px).to_string();
    row.sim_copy = similarity(gw, t.s_t, t.s_t1, cfg.providers);
    try {
      score_sample(gw, renderer, cfg, t, row);
    } catch (const AuthError&) {
      throw;
    } catch (const EndpointError& e) {
      // Counted as a failed sample, never silently dropped.
      spdlog::warn("sample {}: {}", t.id, e.what());
      row.error = e.what();
      row.per_judge.clear();
      row.sim_pred.reset();
      row.iacc_contrib = 0.0;
    }
  });
  finalize_report(report);
  spdlog::info("eval {}: IAcc {:.2f}%, render fail {:.2f}%, similarity {:.2f}%", report.bench, report.iacc_pct,
               report.render_fail_pct, report.similarity_pct);
  return report;
}

}  // namespace codewm
