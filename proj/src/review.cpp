#include "codewm/review.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "codewm/image.hpp"

namespace codewm {

using nlohmann::json;

namespace {

class ImageNotFound : public Error {
 public:
  using Error::Error;
};

}  // namespace

ReviewServer::ReviewServer(ReviewConfig cfg) : cfg_(std::move(cfg)), server_(std::make_unique<httplib::Server>()) {
  clusters_ = load_clusters(cfg_.clusters);
  if (!cfg_.transitions.empty()) {
    for (auto& t : load_transitions(cfg_.transitions)) {
      images_[t.s_t.content_hash] = t.s_t.image_ref;
      images_[t.s_t1.content_hash] = t.s_t1.image_ref;
      transitions_.emplace(t.id, std::move(t));
    }
  }
  install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

json ReviewServer::view(const DedupCluster& c) const {
  json members = json::array();
  for (const auto& id : c.members) {
    json m{{"transition_id", id}};
    if (auto it = transitions_.find(id); it != transitions_.end()) {
      const auto& t = it->second;
      m["s_t_thumb"] = "/api/images/" + t.s_t.content_hash + "?size=thumb";
      m["s_t_full"] = "/api/images/" + t.s_t.content_hash;
      m["s_t1_thumb"] = "/api/images/" + t.s_t1.content_hash + "?size=thumb";
      m["s_t1_full"] = "/api/images/" + t.s_t1.content_hash;
      m["action"] = action_prompt_text(t.action);
    } else {
      m["s_t_thumb"] = m["s_t_full"] = m["s_t1_thumb"] = m["s_t1_full"] = nullptr;
      m["action"] = nullptr;
    }
    members.push_back(std::move(m));
  }
  double min_st = 1, min_st1 = 1;
  for (const auto& e : c.evidence) {
    min_st = std::min(min_st, e.sim_st);
    min_st1 = std::min(min_st1, e.sim_st1);
  }
  json j{{"cluster_id", c.cluster_id},
         {"group_key", c.group_key},
         {"members", members},
         {"evidence", {{"edges", c.evidence.size()}, {"min_sim_st", min_st}, {"min_sim_st1", min_st1}}},
         {"decision", to_string(c.decision)}};
  j["representative"] = c.representative ? json(*c.representative) : json(nullptr);
  return j;
}

json ReviewServer::list_clusters(const std::string& filter, int page, int page_size) const {
  if (filter != "pending" && filter != "all") throw Error("filter must be pending or all");
  if (page < 1 || page_size < 1) throw Error("page and page_size must be positive");
  std::vector<DedupCluster> current;
  {
    std::lock_guard lock(mu_);
    current = with_decisions(clusters_, load_decisions(cfg_.decisions));
  }
  std::vector<const DedupCluster*> shown;
  for (const auto& c : current) {
    if (filter == "all" || c.decision == Decision::pending) shown.push_back(&c);
  }
  const std::size_t total = shown.size();
  const std::size_t from = static_cast<std::size_t>(page - 1) * static_cast<std::size_t>(page_size);
  json items = json::array();
  for (std::size_t i = from; i < std::min(total, from + static_cast<std::size_t>(page_size)); ++i) {
    items.push_back(view(*shown[i]));
  }
  const std::size_t pages = (total + static_cast<std::size_t>(page_size) - 1) / static_cast<std::size_t>(page_size);
  return {{"clusters", items}, {"total", total}, {"page", page}, {"page_size", page_size}, {"pages", pages}};
}

json ReviewServer::post_decision(const std::string& cluster_id, const json& body) {
  if (!body.is_object() || !body.contains("decision") || !body["decision"].is_string()) {
    throw Error("body must be an object with a string \"decision\"");
  }
  DecisionRecord r;
  r.cluster_id = cluster_id;
  r.decision = decision_from_string(body["decision"].get<std::string>());
  if (r.decision == Decision::pending) throw Error("decision must be duplicates or distinct");
  if (body.contains("representative") && body["representative"].is_string()) {
    r.representative = body["representative"].get<std::string>();
  }
  r.annotator = body.value("annotator", "review-ui");
  r.timestamp = utc_timestamp_now();
  std::lock_guard lock(mu_);
  const bool written = append_decision(cfg_.decisions, clusters_, r);
  const auto current = with_decisions(clusters_, load_decisions(cfg_.decisions));
  const auto it = std::find_if(current.begin(), current.end(), [&](const auto& c) { return c.cluster_id == cluster_id; });
  return {{"written", written}, {"cluster", view(*it)}};
}

std::string ReviewServer::image_bytes(const std::string& hash, bool thumb) {
  const auto it = images_.find(hash);
  if (it == images_.end()) throw ImageNotFound("unknown image " + hash);
  if (!thumb) return read_file(it->second);
  std::lock_guard lock(mu_);
  if (auto c = thumbs_.find(hash); c != thumbs_.end()) return c->second;
  const Raster img = load_image(it->second);
  const double scale =
      std::min(1.0, static_cast<double>(cfg_.thumb_max_side) / std::max(img.width(), img.height()));
  const Raster small = resize_area(img, std::max(1, static_cast<int>(img.width() * scale)),
                                   std::max(1, static_cast<int>(img.height() * scale)));
  const auto png = encode_png(small);
  return thumbs_[hash] = std::string(png.begin(), png.end());
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

int int_param(const httplib::Request& req, const char* name, int fallback) {
  if (!req.has_param(name)) return fallback;
  return std::stoi(req.get_param_value(name));
}

}  // namespace

void ReviewServer::install_routes() {
  auto& s = *server_;
  s.Get("/api/clusters", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto filter = req.has_param("filter") ? req.get_param_value("filter") : std::string("pending");
      send_json(res, 200, list_clusters(filter, int_param(req, "page", 1), int_param(req, "page_size", 20)));
    } catch (const std::exception& e) {
      send_json(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
    }
  });
  s.Post(R"(/api/clusters/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      send_json(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
      return;
    }
    try {
      send_json(res, 200, post_decision(req.matches[1].str(), body));
    } catch (const UnknownCluster& e) {
      send_json(res, 404, {{"error", "UnknownCluster"}, {"message", e.what()}});
    } catch (const InvalidRepresentative& e) {
      send_json(res, 422, {{"error", "InvalidRepresentative"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 400, {{"error", "bad_request"}, {"message", e.what()}});
    }
  });
  s.Get(R"(/api/images/([0-9a-f]{64}))", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const bool thumb = req.has_param("size") && req.get_param_value("size") == "thumb";
      const auto bytes = image_bytes(req.matches[1].str(), thumb);
      const bool jpeg = bytes.size() > 2 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
                        static_cast<unsigned char>(bytes[1]) == 0xD8;
      res.set_content(bytes, jpeg ? "image/jpeg" : "image/png");
      res.set_header("Cache-Control", "max-age=86400");
    } catch (const ImageNotFound& e) {
      send_json(res, 404, {{"error", "not_found"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", "image"}, {"message", e.what()}});
    }
  });
  if (!cfg_.static_dir.empty()) {
    if (!s.set_mount_point("/", cfg_.static_dir.string())) {
      throw Error("static directory not found: " + cfg_.static_dir.string());
    }
  }
}

void ReviewServer::bind() {
  port_ = cfg_.port == 0 ? server_->bind_to_any_port(cfg_.host)
                         : (server_->bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1);
  if (port_ <= 0) throw Error("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  spdlog::info("review server on http://{}:{}/ ({} clusters)", cfg_.host, port_, clusters_.size());
}

int ReviewServer::start() {
  bind();
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void ReviewServer::run() {
  bind();
  server_->listen_after_bind();
}

void ReviewServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace codewm
