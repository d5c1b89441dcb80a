#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "codewm/gateway.hpp"
#include "codewm/render.hpp"
#include "codewm/trajectory.hpp"
#include "codewm/wmformat.hpp"

namespace codewm {

class DuplicateOfGroundTruth : public Error {
 public:
  using Error::Error;
};
class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

struct PolicySample {
  std::string id;
  StateImage s_t;
  CanonicalAction gt_action;
  std::string goal;
  std::vector<std::string> history;
  std::string gt_reason = "N/A";  // the datasets carry no rationale for the logged action

  void validate() const;
  static PolicySample from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

/// JSONL with {id, image, action, goal, history[, gt_reason]}; image paths
/// resolve against the file's directory.
std::vector<PolicySample> load_policy_samples(const std::filesystem::path& path);

struct Candidate {
  CanonicalAction action;
  std::string reason;
};

/// Same kind, and points (and swipe end points) within `tolerance` grid units
/// on both axes; kinds without coordinates compare their parameters.
bool duplicates_ground_truth(const CanonicalAction& gt, const CanonicalAction& c, int tolerance = 25);

/// Lenient reader for the numbered-map alternatives format; strict JSON first,
/// then a scan for each "Action": {...} object and its preceding Reason.
std::vector<Candidate> parse_alternatives(std::string_view raw);

/// K-1 alternatives. A reply containing a ground-truth duplicate is requested
/// once more at retry_temperature; a second duplicate throws DuplicateOfGroundTruth.
/// A wrong count throws ParseError.
std::vector<Candidate> gen_alternatives(Gateway& gw, const std::string& policy, const PolicySample& s, int k,
                                        double retry_temperature = 0.2);

/// Candidate list as shown to the selector: one numbered line per candidate.
std::string format_candidates(const std::vector<Candidate>& candidates);

/// Last "Best: <n>" line, 1-based. Throws ParseError / IndexOutOfRange.
int parse_best(std::string_view raw, int k);

int select_action(Gateway& gw, const std::string& policy, const PolicySample& s,
                  const std::vector<Candidate>& candidates);

struct ValueVerdict {
  bool valid = false;
  double confidence = 0.0;
  std::string reason;
  std::string flag;  // "", "clamped", "unparseable", "render_fail"

  nlohmann::json to_json() const;
};

ValueVerdict parse_value_verdict(std::string_view raw);

/// Without pred_shot: the value prompt with S_t only. With it: the
/// world-model value prompt with S_t and the predicted next state.
ValueVerdict estimate_value(Gateway& gw, const std::string& policy, const PolicySample& s, const Candidate& c,
                            const std::optional<StateImage>& pred_shot);

enum class SelectionRule { argmax_valid, tie_break, all_invalid_fallback };
std::string_view to_string(SelectionRule r);

struct ValueSelection {
  std::size_t index = 0;  // 0-based
  SelectionRule rule = SelectionRule::argmax_valid;
};

/// Highest confidence among valid verdicts, lowest index on ties; with no
/// valid verdict, highest confidence overall.
ValueSelection select_by_value(const std::vector<ValueVerdict>& verdicts);

enum class PolicyMode { oracle, value_no_wm, value_with_wm };
PolicyMode policy_mode_from_string(std::string_view s);
std::string_view to_string(PolicyMode m);

struct PolicyEvalConfig {
  std::string policy;
  std::string wm;  // value_with_wm only
  int k = 3;
  PolicyMode mode = PolicyMode::oracle;
  bool shuffle = false;  // oracle mode: permute candidates before selection
  std::uint64_t seed = 0;
  int workers = 4;
  std::filesystem::path work_dir = "policy-work";
  double retry_temperature = 0.2;
};

struct PolicySampleLog {
  std::string sample_id;
  std::vector<Candidate> candidates;       // candidate 1 (index 0) is the ground truth
  std::vector<std::size_t> presented;      // presentation order, oracle mode
  std::vector<ValueVerdict> verdicts;      // value modes
  std::optional<std::size_t> selected;     // 0-based candidate index
  std::string rule;
  bool correct = false;
  std::string error;

  nlohmann::json to_json() const;
};

struct PolicyEvalResult {
  std::vector<PolicySampleLog> log;  // input order
  double accuracy = 0.0;
  std::size_t errors = 0;
  nlohmann::json summary(const PolicyEvalConfig& cfg) const;
};

PolicyEvalResult run_policy_eval(const std::vector<PolicySample>& samples, Gateway& gw, Renderer* renderer,
                                 const PolicyEvalConfig& cfg);

}  // namespace codewm
