#include "fixtures.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <array>
#include <map>
#include <random>

#include "codewm/render.hpp"
#include "codewm/wmformat.hpp"

namespace fixtures {

using nlohmann::json;
using codewm::Raster;
using codewm::Rgb;

TempDir::TempDir(const std::string& tag) {
  std::string templ = (fs::temp_directory_path() / (tag + "-XXXXXX")).string();
  if (!mkdtemp(templ.data())) throw std::runtime_error("mkdtemp failed");
  path_ = templ;
}

TempDir::~TempDir() {
  if (std::getenv("CODEWM_KEEP_TMP")) return;
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Raster screen(int w, int h, std::uint32_t seed) {
  std::mt19937 rng(seed);
  auto channel = [&] { return static_cast<std::uint8_t>(rng() % 256); };
  Raster img(w, h, Rgb{static_cast<std::uint8_t>(200 + rng() % 56), static_cast<std::uint8_t>(200 + rng() % 56),
                       static_cast<std::uint8_t>(200 + rng() % 56)});
  const Rgb header{channel(), channel(), channel()};
  for (int y = 0; y < h / 10; ++y) {
    for (int x = 0; x < w; ++x) img.set(x, y, header);
  }
  for (int b = 0; b < 6; ++b) {
    const Rgb c{channel(), channel(), channel()};
    const int x0 = static_cast<int>(rng() % static_cast<unsigned>(w * 3 / 4));
    const int y0 = h / 10 + static_cast<int>(rng() % static_cast<unsigned>(h * 3 / 4));
    const int bw = w / 8 + static_cast<int>(rng() % static_cast<unsigned>(w / 4));
    const int bh = h / 20 + static_cast<int>(rng() % static_cast<unsigned>(h / 8));
    for (int y = y0; y < std::min(h, y0 + bh); ++y) {
      for (int x = x0; x < std::min(w, x0 + bw); ++x) img.set(x, y, c);
    }
  }
  return img;
}

Raster gradient(int w, int h, bool horizontal) {
  Raster img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int v = horizontal ? x * 255 / std::max(1, w - 1) : y * 255 / std::max(1, h - 1);
      img.set(x, y, Rgb{static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(255 - v), 128});
    }
  }
  return img;
}

codewm::StateImage write_screen(const fs::path& path, int w, int h, std::uint32_t seed) {
  return codewm::StateImage::write_png(screen(w, h, seed), path);
}

std::string rich_page(int variant) {
  static const char* kColors[] = {"#1a73e8", "#d93025", "#188038", "#f9ab00", "#9334e6", "#e8710a"};
  const std::string c1 = kColors[variant % 6], c2 = kColors[(variant + 2) % 6], c3 = kColors[(variant + 4) % 6];
  std::string cards;
  for (int i = 0; i < 5; ++i) {
    cards += "<div class=\"card\" style=\"background:" + std::string(kColors[(variant + i) % 6]) +
             "\"><h2>Item " + std::to_string(variant * 10 + i) + "</h2><p>Details for row " + std::to_string(i) +
             "</p></div>";
  }
  return "<!DOCTYPE html><html><head><meta charset=\"utf-8\"><meta name=\"viewport\" "
         "content=\"width=device-width, initial-scale=1\"><style>"
         "body{margin:0;font-family:sans-serif;background:#f1f3f4}"
         "header{background:" + c1 + ";color:#fff;height:18vh;font-size:9vw;padding:4vw}"
         ".card{margin:3vw;height:12vh;border-radius:3vw;color:#fff;padding:3vw;font-size:5vw}"
         "nav{position:fixed;bottom:0;width:100%;height:10vh;background:" + c2 + "}"
         ".fab{position:fixed;right:6vw;bottom:14vh;width:16vw;height:16vw;border-radius:50%;background:" + c3 + "}"
         "</style></head><body><header>Screen " + std::to_string(variant) + "</header>" + cards +
         "<div class=\"fab\"></div><nav></nav></body></html>";
}

fs::path write_episodes(const fs::path& dir, int episodes, int steps, int w, int h) {
  fs::create_directories(dir / "img");
  std::string body;
  for (int e = 0; e < episodes; ++e) {
    json ep{{"episode_id", "ep" + std::to_string(e)}, {"app", "app" + std::to_string(e % 2)},
            {"goal", "Finish task " + std::to_string(e)}, {"lang", "en"}};
    json st = json::array();
    for (int s = 0; s < steps; ++s) {
      const auto name = "e" + std::to_string(e) + "_s" + std::to_string(s) + ".png";
      write_screen(dir / "img" / name, w, h, static_cast<std::uint32_t>(1000 * e + s + 1));
      json action;
      switch (s % 3) {
        case 0: action = {{"action_type", "TAP"}, {"x", 100 + 37 * s + e}, {"y", 200 + 53 * s}}; break;
        case 1: action = {{"action_type", "SCROLL"}, {"direction", "down"}}; break;
        default: action = {{"action_type", "TYPE"}, {"text", "query " + std::to_string(e)}}; break;
      }
      st.push_back({{"image", "img/" + name}, {"action", action}});
    }
    ep["steps"] = st;
    body += ep.dump() + "\n";
  }
  const auto path = dir / "episodes.jsonl";
  codewm::write_file_atomic(path, body);
  return path;
}

std::vector<codewm::Transition> make_transitions(const fs::path& dir, int episodes, int steps, int w, int h) {
  std::vector<codewm::Transition> out;
  for (const auto& e : codewm::load_episodes(write_episodes(dir, episodes, steps, w, h))) {
    for (auto& t : codewm::to_transitions(e)) out.push_back(std::move(t));
  }
  return out;
}

codewm::GatewayConfig gateway_config(const fs::path& dir, const json& endpoints, const json& embedders) {
  return codewm::GatewayConfig::from_json(
      {{"cache_dir", (dir / "cache").string()}, {"endpoints", endpoints}, {"embedders", embedders}}, dir);
}

json mock_endpoint(const std::string& id, const json& rules, const json& fallback, int max_in_flight) {
  json ep{{"id", id},        {"kind", "mock"},  {"model_name", id + "-model"},
          {"rules", rules},  {"max_in_flight", max_in_flight},
          {"max_retries", 2}, {"backoff_base_s", 0.001}};
  if (!fallback.is_null()) ep["default"] = fallback;
  return ep;
}

json frontier_rules() {
  const json code{{"reasoning", "A list screen with a header and cards."}, {"html", rich_page(3)}};
  return json::array({
      {{"match", "expert mobile UI developer"}, {"response", code.dump()}},
      {{"match", R"re("action_type": ?"TAP", ?"x": ?(\d+))re"},
       {"response", "Tapping the entry near x=$1 opens its detail page, so the list is replaced by a detail view "
                    "with a title bar and a back arrow."}},
      {{"match", R"re("action_type": ?"SCROLL", ?"direction": ?"(\w+)")re"},
       {"response", "Scrolling $1 moves the list so that later cards come into view while the header stays fixed."}},
      {{"match", R"re("action_type": ?"TYPE", ?"text": ?"([^"]*)")re"},
       {"response", "Typing \"$1\" fills the search field and a suggestion list appears under it."}},
  });
}

bool browser_available() {
  std::error_code ec;
  return fs::exists(codewm::default_browser_path(), ec);
}

}  // namespace fixtures

namespace fixtures {

PlantedCorpus planted_corpus(std::uint64_t seed, std::size_t max_n) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> size_d(20, max_n);
  const std::size_t n = size_d(rng);
  PlantedCorpus c;
  std::vector<int> family(n);
  const int families = 1 + static_cast<int>(n / 6);
  for (std::size_t i = 0; i < n; ++i) {
    codewm::Transition t;
    t.episode_id = "planted" + std::to_string(seed) + "-" + std::to_string(i);
    t.id = codewm::transition_id(t.episode_id, 0);
    family[i] = static_cast<int>(rng() % static_cast<std::uint64_t>(families));
    // Family determines the group most of the time; sometimes it strays into another.
    const int g = rng() % 5 == 0 ? static_cast<int>(rng() % 4) : family[i] % 4;
    t.app = "app" + std::to_string(g % 2);
    t.action = g < 2 ? codewm::CanonicalAction::click(100, 100) : codewm::CanonicalAction::scroll(codewm::Direction::down);
    c.transitions.push_back(std::move(t));
  }
  std::uniform_real_distribution<double> near(0.985, 1.0), far(0.5, 0.999);
  c.sims.assign(n, std::vector<std::pair<double, double>>(n, {1.0, 1.0}));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same = family[i] == family[j];
      const std::pair<double, double> s = same ? std::pair{near(rng), near(rng)} : std::pair{far(rng), far(rng)};
      c.sims[i][j] = c.sims[j][i] = s;
    }
  }
  return c;
}

std::vector<std::vector<std::string>> oracle_components(const PlantedCorpus& c, double tau) {
  const auto& ts = c.transitions;
  const std::size_t n = ts.size();
  std::vector<std::size_t> label(n);
  for (std::size_t i = 0; i < n; ++i) label[i] = i;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        // Planted actions are exact copies, so equality stands in for the signature.
        if (i == j || ts[i].app != ts[j].app || !(ts[i].action == ts[j].action)) continue;
        if (!(c.sims[i][j].first > tau && c.sims[i][j].second > tau)) continue;
        if (label[j] < label[i]) {
          label[i] = label[j];
          changed = true;
        }
      }
    }
  }
  std::map<std::size_t, std::vector<std::string>> comps;
  for (std::size_t i = 0; i < n; ++i) comps[label[i]].push_back(ts[i].id);
  std::vector<std::vector<std::string>> out;
  for (auto& [l, m] : comps) {
    if (m.size() < 2) continue;
    std::sort(m.begin(), m.end());
    out.push_back(std::move(m));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fixtures

namespace fixtures {

PolicyFixture policy_fixture(const fs::path& dir) {
  fs::create_directories(dir);
  std::string lines;
  for (int i = 0; i < 10; ++i) {
    const auto img = "screen" + std::to_string(i) + ".png";
    write_screen(dir / img, 216, 480, static_cast<std::uint32_t>(500 + i));
    lines += json{{"id", "s" + std::to_string(i)},
                  {"image", img},
                  {"action", {{"action_type", "TAP"}, {"x", 100}, {"y", 100 + 10 * i}}},
                  {"goal", "task-" + std::to_string(i)},
                  {"history", json::array()}}
                 .dump() +
             "\n";
  }
  PolicyFixture f{dir / "samples.jsonl", json::array()};
  codewm::write_file_atomic(f.samples_path, lines);

  const json alts{{"1", {{"Reason", "Open the item on the right."}, {"Action", {{"action_type", "TAP"}, {"x", 800}, {"y", 800}}}}},
                  {"2", {{"Reason", "Reveal more items."}, {"Action", {{"action_type", "SCROLL"}, {"direction", "down"}}}}}};
  auto verdict = [](bool valid, double c) {
    return json{{"Reason", "scripted"}, {"Judgement", valid ? "valid" : "invalid"}, {"Confidence", c}}.dump();
  };
  // Per task: oracle pick (1-based) and (valid, confidence) for GT, TAP(800,800), SCROLL down.
  struct Row {
    int best;
    std::array<std::pair<bool, double>, 3> v;
  };
  const Row argmax_gt{1, {{{true, .9}, {true, .6}, {false, .95}}}};
  const Row table[10] = {
      argmax_gt, argmax_gt, argmax_gt, argmax_gt, argmax_gt,
      {1, {{{true, .7}, {true, .7}, {false, .9}}}},   // tie, lowest index wins
      {1, {{{false, .8}, {false, .2}, {false, .5}}}},  // all invalid
      {2, {{{true, .4}, {true, .8}, {false, .3}}}},
      {2, {{{true, .4}, {true, .8}, {false, .3}}}},
      {3, {{{false, .1}, {false, .3}, {false, .6}}}},
  };
  const std::string cand[3] = {R"("action_type":"TAP","x":100,)", R"("action_type":"TAP","x":800,)",
                               R"("action_type":"SCROLL")"};
  json rules = json::array({{{"match", "suggest alternative actions"}, {"response", alts.dump()}}});
  for (int i = 0; i < 10; ++i) {
    const std::string goal = "Goal: task-" + std::to_string(i) + "\\n";
    rules.push_back({{"match", "select the best action[\\s\\S]*" + goal},
                     {"response", "Reason: scripted.\nBest: " + std::to_string(table[i].best)}});
    for (int c = 0; c < 3; ++c) {
      rules.push_back({{"match", "evaluating whether a[\\s\\S]*" + goal + "[\\s\\S]*" + cand[c]},
                       {"response", verdict(table[i].v[c].first, table[i].v[c].second)}});
    }
  }
  f.endpoints.push_back(mock_endpoint("policy", rules, nullptr, 8));
  f.endpoints.push_back(mock_endpoint("wm", json::array(), codewm::format_wm_output("The tapped item opens.", rich_page(4)), 8));
  return f;
}

}  // namespace fixtures

namespace fixtures {

double bf_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  return cov / std::sqrt(vx * vy);
}

// Rank = 1 + (#smaller) + (#equal - 1) / 2.
std::vector<double> bf_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, eq = 0;
    for (double v : x) {
      if (v < x[i]) less += 1;
      if (v == x[i]) eq += 1;
    }
    r[i] = 1 + less + (eq - 1) / 2;
  }
  return r;
}

double bf_kendall_b(const std::vector<double>& x, const std::vector<double>& y) {
  double conc = 0, disc = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        tx += 1;
      } else if (dy == 0) {
        ty += 1;
      } else if ((dx > 0) == (dy > 0)) {
        conc += 1;
      } else {
        disc += 1;
      }
    }
  }
  return (conc - disc) / std::sqrt((conc + disc + tx) * (conc + disc + ty));
}

}  // namespace fixtures
