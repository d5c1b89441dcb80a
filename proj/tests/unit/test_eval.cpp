#include <doctest.h>

#include "codewm/eval.hpp"
#include "codewm/wmformat.hpp"
#include "fixtures.hpp"

using namespace codewm;
using nlohmann::json;

namespace {

std::vector<Transition> bench_of(const fixtures::fs::path& dir, const std::vector<int>& xs) {
  std::vector<Transition> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Transition t;
    t.episode_id = "b" + std::to_string(i);
    t.id = transition_id(t.episode_id, 0);
    t.s_t = fixtures::write_screen(dir / ("s" + std::to_string(i) + ".png"), 216, 480, 10 + i);
    t.s_t1 = fixtures::write_screen(dir / ("n" + std::to_string(i) + ".png"), 216, 480, 20 + i);
    t.action = CanonicalAction::click(xs[i], 500);
    out.push_back(t);
  }
  return out;
}

json wm_rules() {
  return json::array({{{"match", R"("x":999)"}, {"response", "Next State Reasoning: nothing\n\nHTML: plain words"}},
                      {{"match", "."}, {"response", format_wm_output("opens details", fixtures::rich_page(2))}}});
}

json judge(const std::string& id, const std::string& pass_pattern) {
  return fixtures::mock_endpoint(
      id, json::array({{{"match", pass_pattern}, {"response", R"({"Thoughts": "matches", "Status": "success"})"}}}),
      R"({"Thoughts": "differs", "Status": "failure"})");
}

}  // namespace

TEST_CASE("panel aggregation over all verdict combinations") {
  for (int mask = 0; mask < 8; ++mask) {
    const std::vector<bool> panel{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0};
    const int ones = (mask & 1) + ((mask >> 1) & 1) + ((mask >> 2) & 1);
    CHECK(aggregate_iacc(panel, false) == doctest::Approx(ones / 3.0));
    CHECK(aggregate_iacc(panel, true) == 0.0);
  }
  CHECK_THROWS_AS(aggregate_iacc({}, false), Error);
}

TEST_CASE("judge replies are parsed leniently and flagged when unusable") {
  fixtures::TempDir dir;
  const auto ts = bench_of(dir.path(), {1, 2, 3, 4});
  Gateway gw(fixtures::gateway_config(
      dir.path(),
      json::array({fixtures::mock_endpoint(
          "j", json::array({{{"match", R"("x":1,)"}, {"response", "```json\n{\"Thoughts\":\"ok\",\"Status\":\"SUCCESS\"}\n```"}},
                            {{"match", R"("x":2,)"}, {"response", "I think it worked."}},
                            {{"match", R"("x":3,)"}, {"response", R"({"Status": "maybe"})"}},
                            {{"match", R"("x":4,)"}, {"response", R"({"Thoughts": "no", "Status": "Failure"})"}}}))})));
  const auto a = judge_once(gw, "j", ts[0], ts[0].s_t1);
  CHECK(a.success);
  CHECK_FALSE(a.parse_flag);
  CHECK(a.thoughts == "ok");
  const auto b = judge_once(gw, "j", ts[1], ts[1].s_t1);
  CHECK_FALSE(b.success);
  CHECK(b.parse_flag);
  CHECK(judge_once(gw, "j", ts[2], ts[2].s_t1).parse_flag);
  const auto d = judge_once(gw, "j", ts[3], ts[3].s_t1);
  CHECK_FALSE(d.success);
  CHECK_FALSE(d.parse_flag);
}

TEST_CASE("similarity is the mean cosine across providers") {
  fixtures::TempDir dir;
  const auto a = fixtures::write_screen(dir / "a.png", 40, 80, 1);
  const auto b = fixtures::write_screen(dir / "b.png", 40, 80, 2);
  Gateway gw(fixtures::gateway_config(
      dir.path(), json::array(),
      json::array({{{"id", "t"}, {"kind", "table"}, {"table", {{a.content_hash, {1, 0}}, {b.content_hash, {0, 1}}}}}})));
  const auto s = similarity(gw, a, b, {"fallback", "t"});
  const double fb = cosine(fallback_embedding(a.decode()), fallback_embedding(b.decode()));
  CHECK(s.per_provider.at("t") == doctest::Approx(0.0));
  CHECK(s.mean == doctest::Approx((fb + 0.0) / 2));
  CHECK(similarity(gw, a, a, {"fallback"}).mean == doctest::Approx(1.0));
}

TEST_CASE("report aggregates and JSON round trip") {
  BenchmarkReport r;
  r.bench = "mini";
  for (int i = 0; i < 4; ++i) {
    SampleRow row;
    row.transition_id = "t" + std::to_string(i);
    row.render_failed = i == 3;
    row.sim_copy.mean = 0.5;
    if (i < 3) {
      row.per_judge["j1"] = {i != 1, "", false};
      row.per_judge["j2"] = {i == 0, "", i == 2};
      row.iacc_contrib = aggregate_iacc({i != 1, i == 0}, false);
      row.sim_pred = SimilarityResult{{{"fallback", 0.1 * (i + 1)}}, 0.1 * (i + 1)};
    }
    r.rows.push_back(row);
  }
  finalize_report(r);
  CHECK(r.iacc_pct == doctest::Approx(100.0 * (1.0 + 0.0 + 0.5) / 4));
  CHECK(r.render_fail_pct == doctest::Approx(25.0));
  CHECK(r.similarity_pct == doctest::Approx(20.0));
  CHECK(r.iacc_per_judge_pct.at("j1") == doctest::Approx(50.0));
  CHECK(r.iacc_per_judge_pct.at("j2") == doctest::Approx(25.0));
  CHECK(r.judge_parse_flags == 1);
  const auto back = BenchmarkReport::from_json(json::parse(r.to_json().dump()));
  CHECK(back.to_json() == r.to_json());
  CHECK(back.table().find("mini") != std::string::npos);
  auto bad = r.to_json();
  bad["schema_version"] = 99;
  CHECK_THROWS_AS(BenchmarkReport::from_json(bad), Error);
}

TEST_CASE("benchmark run scores a mixed mock bench") {
  if (!fixtures::browser_available()) {
    MESSAGE("browser not installed; skipping");
    return;
  }
  fixtures::TempDir dir;
  const auto bench = bench_of(dir.path(), {100, 200, 300, 999});
  Gateway gw(fixtures::gateway_config(dir.path(), json::array({fixtures::mock_endpoint("wm", wm_rules()),
                                                               judge("j1", R"("x":[123]00)"),
                                                               judge("j2", R"("x":[13]00)"),
                                                               judge("j3", R"("x":100)")})));
  Renderer renderer(RenderOptions{.workers = 2});
  EvalConfig cfg;
  cfg.bench = "mock";
  cfg.wm = "wm";
  cfg.judges = {"j1", "j2", "j3"};
  cfg.work_dir = dir / "work";
  const auto report = run_benchmark(bench, gw, renderer, cfg);
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].iacc_contrib == doctest::Approx(1.0));
  CHECK(report.rows[1].iacc_contrib == doctest::Approx(1.0 / 3));
  CHECK(report.rows[2].iacc_contrib == doctest::Approx(2.0 / 3));
  CHECK(report.rows[3].render_failed);
  CHECK(report.rows[3].fail_reason == "parse_fail:no_elements");
  CHECK(report.iacc_pct == doctest::Approx(50.0));
  CHECK(report.render_fail_pct == doctest::Approx(25.0));
  CHECK(report.rows[0].viewport == Viewport::for_screenshot(216, 480).to_string());

  EvalConfig broken = cfg;
  broken.judges = {"nope"};
  CHECK_THROWS_AS(run_benchmark(bench, gw, renderer, broken), ConfigError);
}
