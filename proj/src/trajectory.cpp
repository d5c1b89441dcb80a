#include "codewm/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

namespace codewm {

using nlohmann::json;

void Episode::validate() const {
  if (steps.empty()) throw Error("episode " + episode_id + " has no steps");
  for (const auto& s : steps) {
    s.action.validate();
    if (s.state.width_px <= 0 || s.state.height_px <= 0) {
      throw Error("episode " + episode_id + " has a state with non-positive size");
    }
  }
}

std::string transition_id(std::string_view episode_id, int step_index) {
  std::string key(episode_id);
  key += '\n';
  key += std::to_string(step_index);
  return sha256_hex(key).substr(0, 16);
}

std::vector<Transition> to_transitions(const Episode& e) {
  std::vector<Transition> out;
  if (e.steps.size() < 2) return out;
  out.reserve(e.steps.size() - 1);
  for (std::size_t t = 0; t + 1 < e.steps.size(); ++t) {
    Transition tr;
    tr.step_index = static_cast<int>(t);
    tr.id = transition_id(e.episode_id, tr.step_index);
    tr.app = e.app;
    if (!e.goal.empty()) tr.goal = e.goal;
    tr.lang = e.lang;
    tr.s_t = e.steps[t].state;
    tr.action = e.steps[t].action;
    tr.s_t1 = e.steps[t + 1].state;
    tr.episode_id = e.episode_id;
    out.push_back(std::move(tr));
  }
  return out;
}

std::string portable_path(const std::filesystem::path& p, const std::filesystem::path& base_dir) {
  std::error_code ec;
  auto rel = std::filesystem::proximate(p, base_dir.empty() ? "." : base_dir, ec);
  if (ec) return p.string();
  return rel.generic_string();
}

std::filesystem::path resolve_path(const std::string& ref, const std::filesystem::path& base_dir) {
  std::filesystem::path p(ref);
  if (p.is_absolute() || base_dir.empty()) return p.lexically_normal();
  return (base_dir / p).lexically_normal();
}

namespace {

// Cache decoded image metadata so repeated references are read once.
class ImageIndex {
 public:
  const StateImage& get(const std::filesystem::path& p) {
    auto it = cache_.find(p.string());
    if (it != cache_.end()) return it->second;
    return cache_.emplace(p.string(), StateImage::from_file(p)).first->second;
  }

 private:
  std::unordered_map<std::string, StateImage> cache_;
};

void rescale_pixels(json& rec, int w, int h) {
  auto sx = [w](const json& v) { return json(std::lround(v.get<double>() * 1000.0 / w)); };
  auto sy = [h](const json& v) { return json(std::lround(v.get<double>() * 1000.0 / h)); };
  if (rec.contains("x")) rec["x"] = sx(rec["x"]);
  if (rec.contains("y")) rec["y"] = sy(rec["y"]);
  if (rec.contains("params") && rec["params"].is_array()) {
    auto& p = rec["params"];
    if (p.size() == 2) {
      p[0] = sx(p[0]);
      p[1] = sy(p[1]);
    } else if (p.size() == 5) {
      p[0] = sx(p[0]);
      p[1] = sy(p[1]);
      p[3] = sx(p[3]);
      p[4] = sy(p[4]);
    }
  }
}

}  // namespace

std::vector<Episode> load_episodes(const std::filesystem::path& path) {
  const auto base = path.parent_path();
  ImageIndex images;
  std::vector<Episode> out;
  for (const auto& [line_no, line] : read_numbered_lines(path)) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    Episode e;
    e.episode_id = j.at("episode_id").get<std::string>();
    e.app = j.value("app", "");
    e.goal = j.value("goal", "");
    e.lang = j.value("lang", "");
    const bool pixel_coords = j.value("coord_space", "grid") == "pixel";
    for (const auto& s : j.at("steps")) {
      Step step;
      step.state = images.get(resolve_path(s.at("image").get<std::string>(), base));
      json rec = s.at("action");
      if (pixel_coords) rescale_pixels(rec, step.state.width_px, step.state.height_px);
      step.action = parse_action(rec);
      e.steps.push_back(std::move(step));
    }
    e.validate();
    out.push_back(std::move(e));
  }
  return out;
}

json transition_to_json(const Transition& t, const std::filesystem::path& base_dir) {
  const auto schema = expressible_in(t.action, ActionSchema::kapps) ? ActionSchema::kapps
                                                                     : ActionSchema::m3a;
  json j{{"id", t.id},
         {"app", t.app},
         {"lang", t.lang},
         {"episode_id", t.episode_id},
         {"step_index", t.step_index},
         {"s_t", portable_path(t.s_t.image_ref, base_dir)},
         {"s_t1", portable_path(t.s_t1.image_ref, base_dir)},
         {"action", serialize_action(t.action, schema)}};
  j["goal"] = t.goal ? json(*t.goal) : json(nullptr);
  return j;
}

Transition transition_from_json(const json& j, const std::filesystem::path& base_dir) {
  Transition t;
  t.episode_id = j.value("episode_id", "");
  t.step_index = j.value("step_index", 0);
  t.id = j.contains("id") ? j.at("id").get<std::string>() : transition_id(t.episode_id, t.step_index);
  t.app = j.value("app", "");
  t.lang = j.value("lang", "");
  if (j.contains("goal") && j.at("goal").is_string()) t.goal = j.at("goal").get<std::string>();
  t.s_t = StateImage::from_file(resolve_path(j.at("s_t").get<std::string>(), base_dir));
  t.s_t1 = StateImage::from_file(resolve_path(j.at("s_t1").get<std::string>(), base_dir));
  t.action = parse_action(j.at("action"));
  if (t.step_index < 0) throw Error("transition " + t.id + " has negative step_index");
  return t;
}

std::vector<Transition> load_transitions(const std::filesystem::path& path) {
  std::vector<Transition> out;
  for (const auto& line : read_lines(path)) {
    out.push_back(transition_from_json(json::parse(line), path.parent_path()));
  }
  return out;
}

void save_transitions(const std::vector<Transition>& ts, const std::filesystem::path& path) {
  std::string body;
  for (const auto& t : ts) {
    body += transition_to_json(t, path.parent_path()).dump();
    body += '\n';
  }
  write_file_atomic(path, body);
}

}  // namespace codewm
