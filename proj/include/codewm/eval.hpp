#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "codewm/gateway.hpp"
#include "codewm/render.hpp"
#include "codewm/trajectory.hpp"
#include "codewm/wmformat.hpp"

namespace codewm {

inline constexpr int kReportSchemaVersion = 1;

struct WMOutput {
  std::string reasoning;
  std::string html;
  std::string raw;
  std::optional<RenderResult> render;
  bool render_failed = true;
  std::string fail_reason;  // parse_fail | nav_fail | blank_render | <static reason>
};

/// Queries the world model with (S_t, action), parses and renders the reply
/// at the ground-truth screenshot size.
WMOutput predict_next_state(Gateway& gw, const std::string& wm, const StateImage& s_t, const CanonicalAction& action,
                            const StateImage& size_like, Renderer& renderer, const std::filesystem::path& shot_out);

struct JudgeVerdict {
  bool success = false;
  std::string thoughts;
  bool parse_flag = false;  // reply was unparseable and scored as failure
};

JudgeVerdict judge_once(Gateway& gw, const std::string& judge, const Transition& t, const StateImage& pred_shot);

/// render_failed gives 0; otherwise the mean of the verdicts.
double aggregate_iacc(const std::vector<bool>& panel, bool render_failed);

struct SimilarityResult {
  std::map<std::string, double> per_provider;
  double mean = 0.0;
};

SimilarityResult similarity(Gateway& gw, const StateImage& a, const StateImage& b,
                            const std::vector<std::string>& providers);

struct EvalConfig {
  std::string bench = "bench";
  std::string wm;
  std::vector<std::string> judges;
  std::vector<std::string> providers = {"fallback"};
  std::filesystem::path work_dir = "eval-work";
  int workers = 4;
};

struct SampleRow {
  std::string transition_id;
  bool render_failed = false;
  std::string fail_reason;
  std::string viewport;
  std::map<std::string, JudgeVerdict> per_judge;
  double iacc_contrib = 0.0;
  std::optional<SimilarityResult> sim_pred;  // Sim(pred, S_t+1); absent on render fail
  SimilarityResult sim_copy;                 // Sim(S_t, S_t+1)
  std::string error;                         // endpoint failure for this sample
};

struct BenchmarkReport {
  std::string bench;
  nlohmann::json config;
  std::vector<SampleRow> rows;
  double iacc_pct = 0.0;
  double render_fail_pct = 0.0;
  double similarity_pct = 0.0;
  std::map<std::string, double> similarity_per_provider_pct;
  std::map<std::string, double> iacc_per_judge_pct;
  std::size_t judge_parse_flags = 0;
  std::size_t sample_errors = 0;

  nlohmann::json to_json() const;
  static BenchmarkReport from_json(const nlohmann::json& j);
  /// One table row per benchmark: IAcc, Render Fail, Similarity, then per-judge IAcc.
  std::string table() const;
};

/// Recomputes the aggregate columns from rows.
void finalize_report(BenchmarkReport& report);

BenchmarkReport run_benchmark(const std::vector<Transition>& bench, Gateway& gw, Renderer& renderer,
                              const EvalConfig& cfg);

}  // namespace codewm
