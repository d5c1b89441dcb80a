#pragma once

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

class RenderabilityReject : public Error {
 public:
  using Error::Error;
};
class BlocklistReject : public Error {
 public:
  using Error::Error;
};

struct CodeState {
  std::string reasoning;
  std::string html;
  std::string source_transition_id;
};

struct ReasoningTrace {
  std::string text;
  std::string source_transition_id;
};

struct SftSample {
  std::string id;
  std::string dataset;
  std::string transition_id;
  StateImage image;           // S_t, the only image in the user turn
  std::string user_text;      // world-model prompt with the action filled in
  std::string assistant_text; // "Next State Reasoning: ...\n\nHTML: ..."

  nlohmann::json to_json(const std::filesystem::path& base_dir) const;
};

enum class Strategy { ours, naive_state, naive_reasoning };
Strategy strategy_from_string(std::string_view s);
std::string_view to_string(Strategy s);

/// Sends the image-to-code prompt with `image` and parses {"reasoning","html"}.
/// A reply that fails to parse or whose html fails the static check is retried
/// once at retry_temperature, then rejected (ParseError / RenderabilityReject).
CodeState relabel_state(Gateway& gw, const std::string& frontier, const StateImage& image,
                        const std::string& transition_id, double retry_temperature = 0.2);

/// First blocklisted phrase found in a reasoning trace (case-insensitive), or
/// "empty" for blank text; nullopt when the trace is acceptable.
std::optional<std::string> blocklist_violation(std::string_view text);

/// Look-ahead reasoning from (annotated S_t, action, S_t+1). Throws BlocklistReject.
ReasoningTrace synthesize_reasoning(Gateway& gw, const std::string& frontier, const Transition& t,
                                    const StateImage& annotated_s_t);

/// Throws BlocklistReject when the reasoning contains a line-initial "HTML:".
SftSample build_sft_sample(const Transition& t, const ReasoningTrace& r, const CodeState& c,
                           const std::string& dataset);

struct Rejection {
  std::string transition_id;
  std::string stage;   // relabel | reasoning | assemble | render
  std::string reason;  // parse | renderability | blocklist | endpoint | render verdict
  std::string detail;
  nlohmann::json to_json() const;
};

struct DatagenConfig {
  std::string frontier;
  Strategy strategy = Strategy::ours;
  std::string dataset = "dataset";
  std::filesystem::path work_dir = "datagen-work";  // annotated images, renders, progress ledger
  int workers = 4;
  double retry_temperature = 0.2;
};

struct DatasetResult {
  std::vector<SftSample> samples;     // sorted by transition id
  std::vector<Rejection> rejections;  // sorted by transition id
  std::size_t transitions = 0;
  std::size_t renderable = 0;         // final html passed the static check
  std::size_t rendered = 0;           // samples actually rendered (renderer given)
  std::size_t rendered_ok = 0;

  double renderable_rate() const;
  nlohmann::json summary() const;
};

/// Runs relabeling and reasoning for every transition, concurrently per
/// transition, and assembles samples. Per-sample failures become rejections.
/// With a renderer, every sample's html is also rendered and non-ok renders
/// are rejected.
DatasetResult generate_dataset(const std::vector<Episode>& episodes, Gateway& gw, const DatagenConfig& cfg,
                               Renderer* renderer = nullptr);

/// Writes samples as JSONL (image paths relative to the output directory),
/// and the rejection report as JSONL.
void write_dataset(const DatasetResult& result, const std::filesystem::path& out,
                   const std::filesystem::path& report);

}  // namespace codewm
