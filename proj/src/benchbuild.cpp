#include "codewm/benchbuild.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

namespace codewm {

using nlohmann::json;

void DedupConfig::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("dedup threshold must be in (0,1]");
  if (provider.empty()) throw ConfigError("dedup needs an embedding provider");
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::pending: return "pending";
    case Decision::duplicates: return "duplicates";
    case Decision::distinct: return "distinct";
  }
  return "pending";
}

Decision decision_from_string(std::string_view s) {
  if (s == "pending") return Decision::pending;
  if (s == "duplicates") return Decision::duplicates;
  if (s == "distinct") return Decision::distinct;
  throw Error("unknown decision '" + std::string(s) + "'");
}

bool DedupCluster::has_member(const std::string& id) const {
  return std::binary_search(members.begin(), members.end(), id);
}

json DedupCluster::to_json() const {
  json ev = json::array();
  for (const auto& e : evidence) ev.push_back({{"a", e.id_a}, {"b", e.id_b}, {"sim_st", e.sim_st}, {"sim_st1", e.sim_st1}});
  json j{{"cluster_id", cluster_id}, {"members", members}, {"group_key", group_key},
         {"evidence", ev},           {"decision", to_string(decision)}};
  j["representative"] = representative ? json(*representative) : json(nullptr);
  return j;
}

DedupCluster DedupCluster::from_json(const json& j) {
  DedupCluster c;
  c.cluster_id = j.at("cluster_id").get<std::string>();
  c.members = j.at("members").get<std::vector<std::string>>();
  std::sort(c.members.begin(), c.members.end());
  c.group_key = j.value("group_key", "");
  for (const auto& e : j.value("evidence", json::array())) {
    c.evidence.push_back({e.at("a").get<std::string>(), e.at("b").get<std::string>(), e.at("sim_st").get<double>(),
                          e.at("sim_st1").get<double>()});
  }
  c.decision = decision_from_string(j.value("decision", "pending"));
  if (j.contains("representative") && j["representative"].is_string()) c.representative = j["representative"];
  if (c.members.size() < 2) throw Error("cluster " + c.cluster_id + " has fewer than two members");
  return c;
}

namespace {

int grid_cell(int v) { return std::clamp(v * 20 / 1001, 0, 19); }

std::string cell(const std::optional<GridPoint>& p) {
  if (!p) return "-";
  return std::to_string(grid_cell(p->x)) + "," + std::to_string(grid_cell(p->y));
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::string action_signature(const CanonicalAction& a) {
  std::string s(to_string(a.kind));
  s += "|" + (a.direction ? std::string(to_string(*a.direction)) : std::string("-"));
  s += a.text && !a.text->empty() ? "|text" : "|notext";
  s += "|" + cell(a.point) + "|" + cell(a.end_point);
  return s;
}

std::string group_key(const Transition& t) { return t.app + "#" + action_signature(t.action); }

std::vector<DedupCluster> cluster_components(const std::vector<Transition>& ts, double tau,
                                             const PairSimilarity& sim) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ts.size(); ++i) groups[group_key(ts[i])].push_back(i);

  UnionFind uf(ts.size());
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::pair<double, double>>> edges;
  for (const auto& [key, idx] : groups) {
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        const auto [s0, s1] = sim(idx[a], idx[b]);
        if (s0 > tau && s1 > tau) {
          uf.unite(idx[a], idx[b]);
          edges.push_back({{idx[a], idx[b]}, {s0, s1}});
        }
      }
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> comps;
  for (std::size_t i = 0; i < ts.size(); ++i) comps[uf.find(i)].push_back(i);
  std::map<std::size_t, DedupCluster> by_root;
  for (const auto& [root, members] : comps) {
    if (members.size() < 2) continue;
    DedupCluster c;
    for (auto m : members) c.members.push_back(ts[m].id);
    std::sort(c.members.begin(), c.members.end());
    std::string joined;
    for (const auto& m : c.members) joined += (joined.empty() ? "" : "\n") + m;
    c.cluster_id = "c-" + sha256_hex(joined).substr(0, 12);
    c.group_key = group_key(ts[root]);
    by_root.emplace(root, std::move(c));
  }
  for (const auto& [ij, s] : edges) {
    auto& c = by_root.at(uf.find(ij.first));
    auto a = ts[ij.first].id, b = ts[ij.second].id;
    if (b < a) std::swap(a, b);
    c.evidence.push_back({a, b, s.first, s.second});
  }
  std::vector<DedupCluster> out;
  for (auto& [root, c] : by_root) {
    std::sort(c.evidence.begin(), c.evidence.end(),
              [](const PairEvidence& x, const PairEvidence& y) { return std::tie(x.id_a, x.id_b) < std::tie(y.id_a, y.id_b); });
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.cluster_id < y.cluster_id; });
  return out;
}

std::vector<DedupCluster> find_duplicate_clusters(const std::vector<Transition>& ts, Gateway& gw,
                                                  const DedupConfig& cfg) {
  cfg.validate();
  if (!gw.has_embedder(cfg.provider)) throw ConfigError("unknown embedding provider '" + cfg.provider + "'");
  std::vector<std::vector<double>> e_st(ts.size()), e_st1(ts.size());
  parallel_for(ts.size(), static_cast<std::size_t>(std::max(1, cfg.workers)), [&](std::size_t i) {
    e_st[i] = gw.embed(cfg.provider, ts[i].s_t);
    e_st1[i] = gw.embed(cfg.provider, ts[i].s_t1);
  });
  auto clusters = cluster_components(ts, cfg.tau, [&](std::size_t i, std::size_t j) {
    return std::pair{cosine(e_st[i], e_st[j]), cosine(e_st1[i], e_st1[j])};
  });
  std::size_t covered = 0;
  for (const auto& c : clusters) covered += c.members.size();
  spdlog::info("dedup: {} transitions, {} candidate clusters covering {} transitions (tau {}, provider {})", ts.size(),
               clusters.size(), covered, cfg.tau, cfg.provider);
  return clusters;
}

std::vector<DedupCluster> load_clusters(const std::filesystem::path& path) {
  std::vector<DedupCluster> out;
  for (const auto& line : read_lines(path)) {
    if (trim(line).empty()) continue;
    out.push_back(DedupCluster::from_json(json::parse(line)));
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.cluster_id < y.cluster_id; });
  return out;
}

void save_clusters(const std::vector<DedupCluster>& clusters, const std::filesystem::path& path) {
  std::string text;
  for (const auto& c : clusters) text += c.to_json().dump() + "\n";
  write_file_atomic(path, text);
}

json DecisionRecord::to_json() const {
  json j{{"cluster_id", cluster_id}, {"decision", to_string(decision)}};
  j["representative"] = representative ? json(*representative) : json(nullptr);
  j["annotator"] = annotator;
  j["timestamp"] = timestamp;
  return j;
}

DecisionRecord DecisionRecord::from_json(const json& j) {
  DecisionRecord r;
  r.cluster_id = j.at("cluster_id").get<std::string>();
  r.decision = decision_from_string(j.at("decision").get<std::string>());
  if (j.contains("representative") && j["representative"].is_string()) r.representative = j["representative"];
  r.annotator = j.value("annotator", "");
  r.timestamp = j.value("timestamp", "");
  return r;
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

std::vector<DecisionRecord> load_decisions(const std::filesystem::path& path) {
  std::vector<DecisionRecord> out;
  if (!std::filesystem::exists(path)) return out;
  for (const auto& line : read_lines(path)) {
    if (trim(line).empty()) continue;
    out.push_back(DecisionRecord::from_json(json::parse(line)));
  }
  return out;
}

std::map<std::string, DecisionRecord> resolve_decisions(const std::vector<DecisionRecord>& records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].timestamp < records[b].timestamp; });
  std::map<std::string, DecisionRecord> out;
  for (auto i : order) out[records[i].cluster_id] = records[i];
  return out;
}

void validate_decision(const std::vector<DedupCluster>& clusters, const DecisionRecord& r) {
  auto it = std::find_if(clusters.begin(), clusters.end(), [&](const auto& c) { return c.cluster_id == r.cluster_id; });
  if (it == clusters.end()) throw UnknownCluster("unknown cluster '" + r.cluster_id + "'");
  if (r.representative) {
    if (r.decision != Decision::duplicates) {
      throw InvalidRepresentative("a representative is only meaningful for a duplicates decision");
    }
    if (!it->has_member(*r.representative)) {
      throw InvalidRepresentative("'" + *r.representative + "' is not a member of " + r.cluster_id);
    }
  }
}

bool append_decision(const std::filesystem::path& decisions, const std::vector<DedupCluster>& clusters,
                     const DecisionRecord& r) {
  validate_decision(clusters, r);
  const auto current = resolve_decisions(load_decisions(decisions));
  if (auto it = current.find(r.cluster_id); it != current.end()) {
    if (it->second.decision == r.decision && it->second.representative == r.representative) return false;
  }
  if (decisions.has_parent_path()) std::filesystem::create_directories(decisions.parent_path());
  std::ofstream out(decisions, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot open " + decisions.string() + " for append");
  out << r.to_json().dump() << '\n';
  out.flush();
  if (!out) throw Error("write to " + decisions.string() + " failed");
  return true;
}

std::vector<DedupCluster> with_decisions(std::vector<DedupCluster> clusters,
                                         const std::vector<DecisionRecord>& records) {
  const auto current = resolve_decisions(records);
  for (auto& c : clusters) {
    auto it = current.find(c.cluster_id);
    if (it == current.end()) continue;
    c.decision = it->second.decision;
    c.representative = it->second.representative;
  }
  return clusters;
}

json AdjudicationResult::summary() const {
  return {{"kept", kept.size()}, {"dropped", dropped.size()}, {"confirmed_clusters", confirmed_clusters},
          {"input", kept.size() + dropped.size()}};
}

AdjudicationResult apply_adjudication(const std::vector<Transition>& ts, const std::vector<DedupCluster>& clusters,
                                      const std::vector<DecisionRecord>& decisions) {
  for (const auto& r : decisions) validate_decision(clusters, r);
  std::set<std::string> drop;
  AdjudicationResult res;
  for (const auto& c : with_decisions(clusters, decisions)) {
    if (c.decision != Decision::duplicates) continue;
    ++res.confirmed_clusters;
    const std::string rep = c.representative.value_or(c.members.front());
    for (const auto& m : c.members) {
      if (m != rep) drop.insert(m);
    }
  }
  for (const auto& t : ts) {
    if (drop.count(t.id)) {
      res.dropped.push_back(t.id);
    } else {
      res.kept.push_back(t);
    }
  }
  std::sort(res.dropped.begin(), res.dropped.end());
  return res;
}

namespace {

// Uniform integer in [0, bound) by rejection, independent of the standard
// library's distribution implementation.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

}  // namespace

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t n, std::uint64_t seed) {
  if (n > population) {
    throw NotEnoughSamples("requested " + std::to_string(n) + " samples from " + std::to_string(population));
  }
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + bounded(rng, population - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<Transition> sample_split(const std::vector<Transition>& ts, std::size_t n, std::uint64_t seed) {
  std::vector<Transition> out;
  for (auto i : sample_indices(ts.size(), n, seed)) out.push_back(ts[i]);
  return out;
}

}  // namespace codewm
