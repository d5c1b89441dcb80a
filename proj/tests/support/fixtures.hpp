#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "codewm/gateway.hpp"
#include "codewm/image.hpp"
#include "codewm/trajectory.hpp"

namespace fixtures {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "codewm-test");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

/// Deterministic "screenshot": a seeded background with colored header and blocks.
codewm::Raster screen(int w, int h, std::uint32_t seed);
codewm::Raster gradient(int w, int h, bool horizontal);
codewm::StateImage write_screen(const fs::path& path, int w, int h, std::uint32_t seed);

/// Visually rich HTML page (header bar, cards, text) that renders non-blank at any size.
std::string rich_page(int variant);

/// Episodes JSONL with `episodes` episodes of `steps` steps each, screenshots
/// written under dir/img. Returns the JSONL path.
fs::path write_episodes(const fs::path& dir, int episodes, int steps, int w = 270, int h = 600);

/// Transitions JSONL (via to_transitions) for the episodes written by write_episodes.
std::vector<codewm::Transition> make_transitions(const fs::path& dir, int episodes, int steps, int w = 270,
                                                 int h = 600);

/// Gateway config with a cache under dir/cache and the given endpoints.
codewm::GatewayConfig gateway_config(const fs::path& dir, const nlohmann::json& endpoints,
                                     const nlohmann::json& embedders = nlohmann::json::array());

/// A mock endpoint entry.
nlohmann::json mock_endpoint(const std::string& id, const nlohmann::json& rules,
                             const nlohmann::json& fallback = nullptr, int max_in_flight = 4);

/// Mock frontier model for the data pipeline: image-to-code replies with a rich
/// page, look-ahead replies with a clean trace naming the action.
nlohmann::json frontier_rules();

bool browser_available();

}  // namespace fixtures

namespace fixtures {

/// Randomized dedup corpus: transitions spread over a few apps and action
/// signatures, with planted near-duplicate families. sims hold (S_t, S_t+1)
/// similarities per pair, symmetric.
struct PlantedCorpus {
  std::vector<codewm::Transition> transitions;
  std::vector<std::vector<std::pair<double, double>>> sims;
};
PlantedCorpus planted_corpus(std::uint64_t seed, std::size_t max_n = 200);

/// Brute-force components: O(n^2) label propagation over the thresholded graph.
std::vector<std::vector<std::string>> oracle_components(const PlantedCorpus& c, double tau);

}  // namespace fixtures

namespace fixtures {

/// Ten scripted policy samples (goals task-0..task-9). Candidates are the
/// ground truth TAP(100, y), an alternative TAP(800, 800) and SCROLL down. The
/// mock policy picks the ground truth on task-0..6 in every mode and an
/// alternative on task-7..9, so every mode scores 70%. Value verdicts cover
/// argmax-over-valid (0-4, 7, 8), a tie (5) and all-invalid (6, 9).
struct PolicyFixture {
  fs::path samples_path;
  nlohmann::json endpoints;  // "policy" and "wm"
};
PolicyFixture policy_fixture(const fs::path& dir);

}  // namespace fixtures

namespace fixtures {

// Textbook correlation formulas, kept deliberately naive.
double bf_pearson(const std::vector<double>& x, const std::vector<double>& y);
std::vector<double> bf_ranks(const std::vector<double>& x);
double bf_kendall_b(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace fixtures
