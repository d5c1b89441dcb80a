#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "codewm/benchbuild.hpp"
#include "codewm/trajectory.hpp"

namespace httplib {
class Server;
}

namespace codewm {

struct ReviewConfig {
  std::filesystem::path clusters;
  std::filesystem::path decisions;
  std::filesystem::path transitions;  // optional; source of images and action summaries
  std::filesystem::path static_dir;   // optional; served at /
  std::string host = "127.0.0.1";
  int port = 8190;                    // 0 picks a free port
  int thumb_max_side = 320;
};

/// JSON API over a clusters file and the shared decisions file:
///   GET  /api/clusters?filter=pending|all&page=1&page_size=20
///   POST /api/clusters/{id}/decision  {"decision", "representative", "annotator"}
///   GET  /api/images/{sha256}?size=thumb|full
class ReviewServer {
 public:
  explicit ReviewServer(ReviewConfig cfg);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const { return port_; }

  nlohmann::json list_clusters(const std::string& filter, int page, int page_size) const;
  /// Returns {"written": bool, "cluster": view}. Throws UnknownCluster,
  /// InvalidRepresentative, or Error for a malformed body.
  nlohmann::json post_decision(const std::string& cluster_id, const nlohmann::json& body);

 private:
  void install_routes();
  void bind();
  nlohmann::json view(const DedupCluster& c) const;
  std::string image_bytes(const std::string& hash, bool thumb);

  ReviewConfig cfg_;
  std::vector<DedupCluster> clusters_;
  std::map<std::string, Transition> transitions_;
  std::map<std::string, std::filesystem::path> images_;  // content hash -> file
  mutable std::mutex mu_;                                // decisions file and thumbnail cache
  std::map<std::string, std::string> thumbs_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace codewm
