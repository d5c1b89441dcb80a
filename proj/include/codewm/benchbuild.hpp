#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "codewm/gateway.hpp"
#include "codewm/trajectory.hpp"

namespace codewm {

class UnknownCluster : public Error {
 public:
  using Error::Error;
};
class InvalidRepresentative : public Error {
 public:
  using Error::Error;
};
class NotEnoughSamples : public Error {
 public:
  using Error::Error;
};

struct DedupConfig {
  double tau = 0.997;
  std::string provider = "fallback";
  int workers = 4;
  void validate() const;
};

struct PairEvidence {
  std::string id_a;
  std::string id_b;
  double sim_st = 0.0;
  double sim_st1 = 0.0;
};

enum class Decision { pending, duplicates, distinct };
std::string_view to_string(Decision d);
Decision decision_from_string(std::string_view s);

struct DedupCluster {
  std::string cluster_id;  // "c-" + sha256 of the sorted member ids joined by newlines, 12 hex digits
  std::vector<std::string> members;  // sorted
  std::string group_key;
  std::vector<PairEvidence> evidence;  // the edges that joined the component
  Decision decision = Decision::pending;
  std::optional<std::string> representative;

  bool has_member(const std::string& id) const;
  nlohmann::json to_json() const;
  static DedupCluster from_json(const nlohmann::json& j);
};

/// kind, then direction, text presence and coordinates on a 20x20 grid.
std::string action_signature(const CanonicalAction& a);
std::string group_key(const Transition& t);

/// (sim(S_t), sim(S_t+1)) for the transitions at indices i and j.
using PairSimilarity = std::function<std::pair<double, double>(std::size_t, std::size_t)>;

/// Within each group, i~j iff both similarities exceed tau; returns the
/// connected components of size >= 2, sorted by cluster id.
std::vector<DedupCluster> cluster_components(const std::vector<Transition>& ts, double tau, const PairSimilarity& sim);

std::vector<DedupCluster> find_duplicate_clusters(const std::vector<Transition>& ts, Gateway& gw,
                                                  const DedupConfig& cfg);

std::vector<DedupCluster> load_clusters(const std::filesystem::path& path);
void save_clusters(const std::vector<DedupCluster>& clusters, const std::filesystem::path& path);

struct DecisionRecord {
  std::string cluster_id;
  Decision decision = Decision::pending;
  std::optional<std::string> representative;
  std::string annotator;
  std::string timestamp;  // ISO-8601 UTC, compared lexicographically

  nlohmann::json to_json() const;
  static DecisionRecord from_json(const nlohmann::json& j);
};

std::string utc_timestamp_now();

/// Missing file reads as no decisions.
std::vector<DecisionRecord> load_decisions(const std::filesystem::path& path);

/// Effective decision per cluster: latest timestamp wins, file order breaks ties.
std::map<std::string, DecisionRecord> resolve_decisions(const std::vector<DecisionRecord>& records);

/// Throws UnknownCluster / InvalidRepresentative.
void validate_decision(const std::vector<DedupCluster>& clusters, const DecisionRecord& r);

/// Validates and appends one record. Returns false (and writes nothing) when
/// it matches the cluster's current effective decision.
bool append_decision(const std::filesystem::path& decisions, const std::vector<DedupCluster>& clusters,
                     const DecisionRecord& r);

/// Clusters with their effective decision and representative filled in.
std::vector<DedupCluster> with_decisions(std::vector<DedupCluster> clusters,
                                         const std::vector<DecisionRecord>& records);

struct AdjudicationResult {
  std::vector<Transition> kept;        // input order
  std::vector<std::string> dropped;    // sorted
  std::size_t confirmed_clusters = 0;
  nlohmann::json summary() const;
};

AdjudicationResult apply_adjudication(const std::vector<Transition>& ts, const std::vector<DedupCluster>& clusters,
                                      const std::vector<DecisionRecord>& decisions);

/// Uniform sample without replacement (partial Fisher-Yates over mt19937_64
/// with rejection-sampled bounds), returned in input order.
std::vector<Transition> sample_split(const std::vector<Transition>& ts, std::size_t n, std::uint64_t seed);
std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed);

}  // namespace codewm
