#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "codewm/action.hpp"
#include "codewm/image.hpp"

namespace codewm {

struct Step {
  StateImage state;
  CanonicalAction action;
};

struct Episode {
  std::string episode_id;
  std::string app;
  std::string goal;
  std::string lang;
  std::vector<Step> steps;

  /// Non-empty steps and valid actions; throws Error otherwise.
  void validate() const;
};

struct Transition {
  std::string id;
  std::string app;
  std::optional<std::string> goal;
  std::string lang;
  StateImage s_t;
  CanonicalAction action;
  StateImage s_t1;
  std::string episode_id;
  int step_index = 0;
};

/// Content-derived id: first 16 hex digits of sha256("<episode_id>\n<step_index>").
std::string transition_id(std::string_view episode_id, int step_index);

/// Pairs step t's state and action with step t+1's state; T steps give max(0, T-1).
std::vector<Transition> to_transitions(const Episode& episode);

/// Reads an episodes JSONL file. Image paths resolve against the file's
/// directory; each step's action may be a kapps or m3a record. An optional
/// per-episode "coord_space": "pixel" rescales coordinates onto the grid.
std::vector<Episode> load_episodes(const std::filesystem::path& path);

nlohmann::json transition_to_json(const Transition& t, const std::filesystem::path& base_dir);
Transition transition_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

std::vector<Transition> load_transitions(const std::filesystem::path& path);
/// Writes one transition per line, image paths relative to the file's directory.
void save_transitions(const std::vector<Transition>& ts, const std::filesystem::path& path);

/// Path written into JSONL: relative to base_dir when possible.
std::string portable_path(const std::filesystem::path& p, const std::filesystem::path& base_dir);
std::filesystem::path resolve_path(const std::string& ref, const std::filesystem::path& base_dir);

}  // namespace codewm
