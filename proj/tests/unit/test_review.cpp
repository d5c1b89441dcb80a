#include <doctest.h>

#include <cstdlib>

#include <httplib.h>

#include "codewm/image.hpp"
#include "codewm/review.hpp"
#include "fixtures.hpp"

using namespace codewm;
using nlohmann::json;

namespace {

struct Setup {
  fixtures::TempDir dir;
  std::vector<Transition> ts;
  std::vector<DedupCluster> clusters;
  ReviewConfig cfg;

  Setup() {
    ts = fixtures::make_transitions(dir.path(), 2, 5, 400, 800);
    save_transitions(ts, dir / "transitions.jsonl");
    for (int k = 0; k < 4; ++k) {
      DedupCluster c;
      c.members = {ts[2 * k].id, ts[2 * k + 1].id};
      std::sort(c.members.begin(), c.members.end());
      c.cluster_id = "c-" + std::to_string(k);
      c.evidence.push_back({c.members[0], c.members[1], 0.998, 0.999});
      clusters.push_back(c);
    }
    save_clusters(clusters, dir / "clusters.jsonl");
    cfg.clusters = dir / "clusters.jsonl";
    cfg.decisions = dir / "decisions.jsonl";
    cfg.transitions = dir / "transitions.jsonl";
    cfg.port = 0;
  }
};

}  // namespace

TEST_CASE("pending filter and pagination") {
  Setup s;
  ReviewServer srv(s.cfg);
  CHECK(srv.list_clusters("pending", 1, 20)["total"] == 4);
  srv.post_decision("c-1", {{"decision", "distinct"}});
  const auto pending = srv.list_clusters("pending", 1, 20);
  CHECK(pending["total"] == 3);
  CHECK(pending["clusters"].size() == 3);
  CHECK(srv.list_clusters("all", 1, 20)["total"] == 4);

  const auto p1 = srv.list_clusters("pending", 1, 2);
  const auto p2 = srv.list_clusters("pending", 2, 2);
  CHECK(p1["clusters"].size() == 2);
  CHECK(p2["clusters"].size() == 1);
  CHECK(p1["pages"] == 2);
  CHECK(srv.list_clusters("pending", 3, 2)["clusters"].empty());
  CHECK_THROWS_AS(srv.list_clusters("mine", 1, 2), Error);
}

TEST_CASE("cluster views carry images, actions and evidence") {
  Setup s;
  ReviewServer srv(s.cfg);
  const auto c = srv.list_clusters("all", 1, 1)["clusters"][0];
  CHECK(c["cluster_id"] == "c-0");
  CHECK(c["decision"] == "pending");
  CHECK(c["representative"].is_null());
  CHECK(c["evidence"]["edges"] == 1);
  CHECK(c["evidence"]["min_sim_st"] == 0.998);
  const auto& m = c["members"][0];
  CHECK(m["s_t_thumb"].get<std::string>().ends_with("?size=thumb"));
  CHECK(m["action"].get<std::string>().find("action_type") != std::string::npos);
}

TEST_CASE("HTTP API round trip writes the shared decisions file") {
  Setup s;
  ReviewServer srv(s.cfg);
  const int port = srv.start();
  httplib::Client cli("127.0.0.1", port);

  auto res = cli.Get("/api/clusters?filter=pending&page=1&page_size=2");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["clusters"].size() == 2);

  const auto rep = s.clusters[0].members[1];
  res = cli.Post("/api/clusters/c-0/decision",
                 json{{"decision", "duplicates"}, {"representative", rep}, {"annotator", "ann"}}.dump(),
                 "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto body = json::parse(res->body);
  CHECK(body["written"] == true);
  CHECK(body["cluster"]["representative"] == rep);

  res = cli.Post("/api/clusters/c-0/decision", json{{"decision", "duplicates"}, {"representative", rep}}.dump(),
                 "application/json");
  CHECK(json::parse(res->body)["written"] == false);

  CHECK(cli.Post("/api/clusters/nope/decision", R"({"decision":"distinct"})", "application/json")->status == 404);
  CHECK(cli.Post("/api/clusters/c-1/decision", R"({"decision":"duplicates","representative":"zz"})",
                 "application/json")->status == 422);
  CHECK(cli.Post("/api/clusters/c-1/decision", "{oops", "application/json")->status == 400);
  CHECK(cli.Post("/api/clusters/c-1/decision", R"({"decision":"pending"})", "application/json")->status == 400);
  CHECK(cli.Get("/api/clusters?filter=bogus")->status == 400);

  const auto hash = s.ts[0].s_t.content_hash;
  auto full = cli.Get("/api/images/" + hash);
  REQUIRE(full);
  CHECK(full->status == 200);
  CHECK(sha256_hex(full->body) == hash);
  auto thumb = cli.Get("/api/images/" + hash + "?size=thumb");
  const auto img = decode_image(std::vector<std::uint8_t>(thumb->body.begin(), thumb->body.end()));
  CHECK(img.width() == 160);
  CHECK(img.height() == 320);
  CHECK(cli.Get("/api/images/" + std::string(64, '0'))->status == 404);
  srv.stop();

  // The file the server wrote is what the batch tools read.
  const auto ds = load_decisions(s.cfg.decisions);
  REQUIRE(ds.size() == 1);
  CHECK(ds[0].annotator == "ann");
  const auto r = apply_adjudication(s.ts, s.clusters, ds);
  CHECK(r.dropped == std::vector<std::string>{s.clusters[0].members[0]});
  CHECK(r.kept.size() == s.ts.size() - 1);
}

TEST_CASE("static files are served from the mount point") {
  Setup s;
  write_file_atomic(s.dir / "ui" / "index.html", "<p>ui</p>");
  s.cfg.static_dir = s.dir / "ui";
  ReviewServer srv(s.cfg);
  httplib::Client cli("127.0.0.1", srv.start());
  auto res = cli.Get("/index.html");
  REQUIRE(res);
  CHECK(res->body == "<p>ui</p>");
  s.cfg.static_dir = s.dir / "missing";
  CHECK_THROWS_AS(ReviewServer{s.cfg}, Error);
}

TEST_CASE("decisions from the UI API and from the CLI apply identically") {
  fixtures::TempDir dir;
  const auto ts = fixtures::make_transitions(dir.path(), 3, 5, 400, 800);
  save_transitions(ts, dir / "transitions.jsonl");
  std::vector<DedupCluster> clusters;
  const std::vector<std::vector<std::size_t>> groups{{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9, 10}};
  for (std::size_t k = 0; k < groups.size(); ++k) {
    DedupCluster c;
    for (auto i : groups[k]) c.members.push_back(ts[i].id);
    std::sort(c.members.begin(), c.members.end());
    c.cluster_id = "c-" + std::to_string(k);
    for (std::size_t i = 1; i < c.members.size(); ++i) c.evidence.push_back({c.members[0], c.members[i], 0.998, 0.999});
    clusters.push_back(c);
  }
  save_clusters(clusters, dir / "clusters.jsonl");

  struct Choice {
    std::string decision;
    std::optional<std::string> representative;
  };
  const std::vector<Choice> choices{{"duplicates", std::nullopt},
                                    {"distinct", std::nullopt},
                                    {"duplicates", clusters[2].members.back()},
                                    {"distinct", std::nullopt},
                                    {"duplicates", clusters[4].members[1]}};

  ReviewConfig cfg;
  cfg.clusters = dir / "clusters.jsonl";
  cfg.decisions = dir / "ui.jsonl";
  cfg.transitions = dir / "transitions.jsonl";
  cfg.port = 0;
  {
    ReviewServer srv(cfg);
    httplib::Client cli("127.0.0.1", srv.start());
    const auto bad = cli.Post("/api/clusters/c-4/decision",
                              json{{"decision", "duplicates"}, {"representative", ts[0].id}}.dump(), "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 422);
    CHECK_FALSE(std::filesystem::exists(dir / "ui.jsonl"));
    for (std::size_t k = 0; k < choices.size(); ++k) {
      json body{{"decision", choices[k].decision}};
      if (choices[k].representative) body["representative"] = *choices[k].representative;
      const auto res = cli.Post("/api/clusters/c-" + std::to_string(k) + "/decision", body.dump(), "application/json");
      REQUIRE(res);
      CHECK(res->status == 200);
    }
    srv.stop();
  }

  for (std::size_t k = 0; k < choices.size(); ++k) {
    std::string cmd = std::string(CODEWM_CLI_PATH) + " --log-level off bench decide --clusters '" +
                      (dir / "clusters.jsonl").string() + "' --decisions '" + (dir / "cli.jsonl").string() +
                      "' --cluster c-" + std::to_string(k) + " --decision " + choices[k].decision;
    if (choices[k].representative) cmd += " --representative " + *choices[k].representative;
    CHECK(std::system((cmd + " > /dev/null").c_str()) == 0);
  }

  const auto ui = apply_adjudication(ts, clusters, load_decisions(dir / "ui.jsonl"));
  const auto via_cli = apply_adjudication(ts, clusters, load_decisions(dir / "cli.jsonl"));
  save_transitions(ui.kept, dir / "kept_ui.jsonl");
  save_transitions(via_cli.kept, dir / "kept_cli.jsonl");
  CHECK(read_file(dir / "kept_ui.jsonl") == read_file(dir / "kept_cli.jsonl"));
  CHECK(ui.summary() == via_cli.summary());
  CHECK(ui.kept.size() == ts.size() - 1 - 1 - 2);
  CHECK(ui.dropped.size() == 4);
}
