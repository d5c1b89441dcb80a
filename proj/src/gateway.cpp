#include "codewm/gateway.hpp"

#include <httplib.h>

#include "codewm/trajectory.hpp"

#include <cmath>
#include <cstdlib>
#include <regex>
#include <thread>

namespace codewm {

using nlohmann::json;

namespace {

std::string env_or_empty(const std::string& name) {
  if (name.empty()) return {};
  const char* v = std::getenv(name.c_str());
  return v ? std::string(v) : std::string();
}

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("url without scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

std::string mime_for(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8) return "image/jpeg";
  return "image/png";
}

std::string image_data_url(const StateImage& img, int max_side) {
  auto bytes = read_file_bytes(img.image_ref);
  if (max_side > 0 && std::max(img.width_px, img.height_px) > max_side) {
    const double s = static_cast<double>(max_side) / std::max(img.width_px, img.height_px);
    const Raster small = resize_area(decode_image(bytes), std::max(1, static_cast<int>(std::lround(img.width_px * s))),
                                     std::max(1, static_cast<int>(std::lround(img.height_px * s))));
    bytes = encode_png(small);
  }
  return "data:" + mime_for(bytes) + ";base64," + base64_encode(std::span<const std::uint8_t>(bytes));
}

class HttpChatProvider final : public ChatProvider {
 public:
  std::string complete(const ModelEndpoint& ep, const ChatRequest& req, const std::string& key) override {
    std::string token;
    if (!ep.auth_ref.empty()) {
      token = env_or_empty(ep.auth_ref);
      if (token.empty()) throw AuthError("environment variable " + ep.auth_ref + " is not set", key);
    }
    json content = json::array();
    for (const auto& p : req.parts) {
      if (p.kind == MessagePart::Kind::text) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", image_data_url(p.image, ep.image_max_side)}}}});
      }
    }
    json body{{"model", ep.model_name},
              {"messages", json::array({{{"role", "user"}, {"content", content}}})},
              {"temperature", req.temperature},
              {"max_tokens", req.max_output_tokens}};

    const auto url = split_url(ep.base_url);
    httplib::Client cli(url.origin);
    const auto secs = static_cast<time_t>(ep.timeout_s);
    const auto usecs = static_cast<time_t>((ep.timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

    auto res = cli.Post(url.path + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
      if (res.error() == httplib::Error::Read || res.error() == httplib::Error::Write ||
          res.error() == httplib::Error::ConnectionTimeout) {
        throw TimeoutError(ep.id + ": " + httplib::to_string(res.error()), key);
      }
      throw TransientError(ep.id + ": " + httplib::to_string(res.error()), key);
    }
    if (res->status == 401 || res->status == 403) {
      throw AuthError(ep.id + ": HTTP " + std::to_string(res->status), key);
    }
    if (res->status == 429 || res->status >= 500) {
      throw TransientError(ep.id + ": HTTP " + std::to_string(res->status), key);
    }
    if (res->status != 200) {
      throw EndpointError(ep.id + ": HTTP " + std::to_string(res->status) + ": " + res->body, key);
    }
    try {
      const auto j = json::parse(res->body);
      const auto& msg = j.at("choices").at(0).at("message").at("content");
      if (msg.is_string()) return msg.get<std::string>();
      // Some servers return content as a list of parts.
      std::string text;
      for (const auto& part : msg) text += part.value("text", "");
      return text;
    } catch (const json::exception& e) {
      throw EndpointError(ep.id + ": malformed completion body: " + e.what(), key);
    }
  }
};

class MockChatProvider final : public ChatProvider {
 public:
  explicit MockChatProvider(json script) : script_(std::move(script)) {
    const auto& rules = script_.contains("rules") ? script_.at("rules") : json::array();
    for (const auto& r : rules) {
      Rule rule;
      rule.spec = r;
      if (r.contains("match")) rule.re = std::regex(r.at("match").get<std::string>(), std::regex::ECMAScript);
      rules_.push_back(std::move(rule));
    }
  }

  std::string complete(const ModelEndpoint& ep, const ChatRequest& req, const std::string& key) override {
    const std::string prompt = req.flattened();
    for (auto& rule : rules_) {
      const auto& r = rule.spec;
      if (r.contains("key_prefix") && key.rfind(r.at("key_prefix").get<std::string>(), 0) != 0) continue;
      if (r.contains("temperature") && std::abs(r.at("temperature").get<double>() - req.temperature) > 1e-9) {
        continue;
      }
      std::smatch m;
      if (rule.re && !std::regex_search(prompt, m, *rule.re)) continue;

      if (r.contains("delay_ms")) {
        std::this_thread::sleep_for(std::chrono::milliseconds(r.at("delay_ms").get<int>()));
      }
      if (r.contains("fail")) {
        const auto kind = r.at("fail").get<std::string>();
        if (kind == "auth") throw AuthError(ep.id + ": scripted auth failure", key);
        if (kind == "timeout") throw TimeoutError(ep.id + ": scripted timeout", key);
        throw TransientError(ep.id + ": scripted failure", key);
      }
      if (r.contains("fail_times")) {
        std::lock_guard lock(mu_);
        if (rule.hits++ < r.at("fail_times").get<int>()) {
          throw TransientError(ep.id + ": scripted transient failure", key);
        }
      }
      const auto response = r.value("response", std::string());
      if (rule.re && !m.empty()) return m.format(response);
      return response;
    }
    if (script_.contains("default")) return script_.at("default").get<std::string>();
    throw EndpointError(ep.id + ": no scripted response matches the request", key);
  }

 private:
  struct Rule {
    json spec;
    std::optional<std::regex> re;
    int hits = 0;
  };
  json script_;
  std::vector<Rule> rules_;
  std::mutex mu_;
};

double seconds_between(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

}  // namespace

std::unique_ptr<ChatProvider> make_http_provider() { return std::make_unique<HttpChatProvider>(); }
std::unique_ptr<ChatProvider> make_mock_provider(const json& script) {
  return std::make_unique<MockChatProvider>(script);
}

void ModelEndpoint::validate() const {
  if (id.empty()) throw ConfigError("endpoint without id");
  if (max_in_flight < 1) throw ConfigError(id + ": max_in_flight must be >= 1");
  if (!(timeout_s > 0)) throw ConfigError(id + ": timeout must be > 0");
  if (max_retries < 0) throw ConfigError(id + ": max_retries must be >= 0");
  if (kind == EndpointKind::http && base_url.empty()) throw ConfigError(id + ": http endpoint needs base_url");
}

ModelEndpoint ModelEndpoint::from_json(const json& j, const std::filesystem::path& base_dir) {
  ModelEndpoint ep;
  ep.id = j.at("id").get<std::string>();
  const auto kind = j.value("kind", "http");
  if (kind == "http") ep.kind = EndpointKind::http;
  else if (kind == "mock") ep.kind = EndpointKind::mock;
  else throw ConfigError(ep.id + ": unknown endpoint kind '" + kind + "'");
  ep.base_url = j.value("base_url", "");
  ep.model_name = j.value("model_name", ep.id);
  ep.auth_ref = j.value("auth_env", "");
  ep.max_in_flight = j.value("max_in_flight", 4);
  ep.timeout_s = j.value("timeout_s", 120.0);
  ep.max_retries = j.value("max_retries", 3);
  ep.backoff_base_s = j.value("backoff_base_s", 0.5);
  ep.image_max_side = j.value("image_max_side", 0);
  if (j.contains("script")) {
    const auto& s = j.at("script");
    ep.script = s.is_string() ? json::parse(read_file(resolve_path(s.get<std::string>(), base_dir))) : s;
  } else if (j.contains("rules") || j.contains("default")) {
    ep.script = json::object();
    if (j.contains("rules")) ep.script["rules"] = j.at("rules");
    if (j.contains("default")) ep.script["default"] = j.at("default");
  }
  ep.validate();
  return ep;
}

std::string ChatRequest::flattened() const {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += '\n';
    if (p.kind == MessagePart::Kind::text) out += p.text;
    else out += "[image:" + p.image.content_hash + "]";
  }
  return out;
}

std::string request_key(const ModelEndpoint& ep, const ChatRequest& req) {
  json parts = json::array();
  for (const auto& p : req.parts) {
    if (p.kind == MessagePart::Kind::text) parts.push_back({{"text", p.text}});
    else parts.push_back({{"image", p.image.content_hash}});
  }
  const json canonical{{"endpoint", ep.id},
                       {"model", ep.model_name},
                       {"parts", parts},
                       {"temperature", req.temperature},
                       {"max_output_tokens", req.max_output_tokens}};
  return sha256_hex(canonical.dump());
}

std::filesystem::path ResponseCache::path_for(const std::string& endpoint_id, const std::string& key) const {
  return root_ / endpoint_id / key.substr(0, 2) / (key + ".txt");
}

std::optional<std::string> ResponseCache::get(const std::string& endpoint_id, const std::string& key) const {
  const auto p = path_for(endpoint_id, key);
  std::error_code ec;
  if (!std::filesystem::exists(p, ec)) return std::nullopt;
  return read_file(p);
}

void ResponseCache::put(const std::string& endpoint_id, const std::string& key, std::string_view text) const {
  write_file_atomic(path_for(endpoint_id, key), text);
}

// ------------------------------------------------------------- embeddings

EmbedderConfig EmbedderConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  EmbedderConfig c;
  c.id = j.at("id").get<std::string>();
  const auto kind = j.value("kind", "http");
  if (kind == "fallback") c.kind = EmbedderKind::fallback;
  else if (kind == "http") c.kind = EmbedderKind::http;
  else if (kind == "table") c.kind = EmbedderKind::table;
  else throw ConfigError(c.id + ": unknown embedder kind '" + kind + "'");
  c.url = j.value("url", "");
  c.model_name = j.value("model_name", c.id);
  c.auth_ref = j.value("auth_env", "");
  c.timeout_s = j.value("timeout_s", 60.0);
  c.allow_fallback = j.value("allow_fallback", false);
  if (j.contains("table")) {
    const auto& t = j.at("table");
    c.table = t.is_string() ? json::parse(read_file(resolve_path(t.get<std::string>(), base_dir))) : t;
  }
  if (c.kind == EmbedderKind::http && c.url.empty()) throw ConfigError(c.id + ": http embedder needs url");
  return c;
}

std::vector<double> fallback_embedding(const Raster& img) {
  constexpr int kSide = 32;
  if (img.empty()) throw ImageDecodeError("fallback embedding of an empty image");
  const double sx = static_cast<double>(img.width()) / kSide;
  const double sy = static_cast<double>(img.height()) / kSide;
  std::vector<double> v(kSide * kSide, 0.0);
  for (int oy = 0; oy < kSide; ++oy) {
    const double y0 = oy * sy, y1 = (oy + 1) * sy;
    for (int ox = 0; ox < kSide; ++ox) {
      const double x0 = ox * sx, x1 = (ox + 1) * sx;
      double acc = 0, total = 0;
      for (int y = static_cast<int>(y0); y < static_cast<int>(std::ceil(y1)) && y < img.height(); ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        for (int x = static_cast<int>(x0); x < static_cast<int>(std::ceil(x1)) && x < img.width(); ++x) {
          const double w = wy * (std::min<double>(x + 1, x1) - std::max<double>(x, x0));
          const Rgb c = img.at(x, y);
          acc += w * (0.299 * c.r + 0.587 * c.g + 0.114 * c.b) / 255.0;
          total += w;
        }
      }
      v[static_cast<std::size_t>(oy) * kSide + ox] = acc / total;
    }
  }
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double norm2 = 0;
  for (double& x : v) {
    x -= mean;
    norm2 += x * x;
  }
  if (norm2 < 1e-18) {
    const double sign = mean >= 0.5 ? 1.0 : -1.0;
    const double c = sign / std::sqrt(static_cast<double>(v.size()));
    std::fill(v.begin(), v.end(), c);
    return v;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

// ------------------------------------------------------------------ gateway

GatewayConfig GatewayConfig::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

GatewayConfig GatewayConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  GatewayConfig cfg;
  cfg.cache_dir = resolve_path(j.value("cache_dir", std::string("cache")), base_dir);
  for (const auto& e : j.value("endpoints", json::array())) cfg.endpoints.push_back(ModelEndpoint::from_json(e, base_dir));
  for (const auto& e : j.value("embedders", json::array())) cfg.embedders.push_back(EmbedderConfig::from_json(e, base_dir));
  cfg.extra = j;
  return cfg;
}

struct Gateway::Slot {
  explicit Slot(ModelEndpoint e)
      : ep(std::move(e)), sem(ep.max_in_flight),
        provider(ep.kind == EndpointKind::mock ? make_mock_provider(ep.script) : make_http_provider()) {}
  ModelEndpoint ep;
  std::counting_semaphore<1 << 20> sem;
  std::unique_ptr<ChatProvider> provider;
  EndpointStats stats;
};

Gateway::Gateway(GatewayConfig cfg) : cfg_(std::move(cfg)), cache_(cfg_.cache_dir) {
  for (const auto& ep : cfg_.endpoints) {
    ep.validate();
    if (!slots_.emplace(ep.id, std::make_unique<Slot>(ep)).second) {
      throw ConfigError("duplicate endpoint id '" + ep.id + "'");
    }
  }
  EmbedderConfig fallback;
  fallback.id = "fallback";
  embedders_.emplace("fallback", fallback);
  for (const auto& e : cfg_.embedders) embedders_[e.id] = e;
}

Gateway::~Gateway() = default;

Gateway::Slot& Gateway::slot(const std::string& id) const {
  auto it = slots_.find(id);
  if (it == slots_.end()) throw ConfigError("unknown endpoint '" + id + "'");
  return *it->second;
}

const ModelEndpoint& Gateway::endpoint(const std::string& id) const { return slot(id).ep; }
bool Gateway::has_endpoint(const std::string& id) const { return slots_.contains(id); }
const EndpointStats& Gateway::stats(const std::string& id) const { return slot(id).stats; }

void Gateway::set_provider(const std::string& id, std::unique_ptr<ChatProvider> provider) {
  slot(id).provider = std::move(provider);
}

std::string Gateway::chat(const std::string& endpoint_id, const ChatRequest& req) {
  Slot& s = slot(endpoint_id);
  const std::string key = request_key(s.ep, req);
  if (req.parts.empty()) throw InvalidRequest(endpoint_id + ": request has no message parts", key);
  if (req.max_output_tokens <= 0 || req.max_output_tokens > kMaxOutputTokens) {
    throw InvalidRequest(endpoint_id + ": max_output_tokens " + std::to_string(req.max_output_tokens) +
                             " outside (0, " + std::to_string(kMaxOutputTokens) + "]",
                         key);
  }
  if (auto hit = cache_.get(endpoint_id, key)) {
    ++s.stats.cache_hits;
    return *hit;
  }

  const auto deadline_start = std::chrono::steady_clock::now();
  for (int attempt = 0;; ++attempt) {
    try {
      s.sem.acquire();
      const int now = ++s.stats.in_flight;
      int seen = s.stats.max_observed_in_flight.load();
      while (now > seen && !s.stats.max_observed_in_flight.compare_exchange_weak(seen, now)) {
      }
      ++s.stats.network_calls;
      struct Release {
        Slot& s;
        ~Release() {
          --s.stats.in_flight;
          s.sem.release();
        }
      } release{s};
      std::string text = s.provider->complete(s.ep, req, key);
      cache_.put(endpoint_id, key, text);
      return text;
    } catch (const AuthError&) {
      throw;
    } catch (const InvalidRequest&) {
      throw;
    } catch (const TimeoutError&) {
      if (attempt >= s.ep.max_retries) throw;
    } catch (const TransientError& e) {
      if (attempt >= s.ep.max_retries) {
        throw EndpointError(std::string(e.what()) + " (after " + std::to_string(attempt + 1) + " attempts, " +
                                std::to_string(seconds_between(deadline_start, std::chrono::steady_clock::now())) +
                                "s)",
                            key);
      }
    } catch (const ImageDecodeError& e) {
      throw EndpointError(endpoint_id + ": " + e.what(), key);
    }
    const double delay = s.ep.backoff_base_s * std::pow(2.0, attempt);
    std::this_thread::sleep_for(std::chrono::duration<double>(delay));
  }
}

bool Gateway::has_embedder(const std::string& id) const { return embedders_.contains(id); }

std::vector<double> Gateway::embed(const std::string& provider_id, const StateImage& image) {
  auto it = embedders_.find(provider_id);
  if (it == embedders_.end()) throw ProviderUnavailable("unknown embedding provider '" + provider_id + "'");
  const std::string memo_key = provider_id + ":" + image.content_hash;
  {
    std::lock_guard lock(embed_mu_);
    if (auto m = embed_memo_.find(memo_key); m != embed_memo_.end()) return m->second;
  }
  std::vector<double> v;
  try {
    v = embed_uncached(it->second, image);
  } catch (const ProviderUnavailable&) {
    if (!it->second.allow_fallback) throw;
    v = fallback_embedding(image.decode());
  }
  std::lock_guard lock(embed_mu_);
  embed_memo_.emplace(memo_key, v);
  return v;
}

std::vector<double> Gateway::embed_uncached(const EmbedderConfig& cfg, const StateImage& image) {
  auto normalize = [&](std::vector<double> v) {
    double n = 0;
    for (double x : v) n += x * x;
    if (n <= 0) throw ProviderUnavailable(cfg.id + ": zero embedding");
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
  };
  switch (cfg.kind) {
    case EmbedderKind::fallback:
      return fallback_embedding(image.decode());
    case EmbedderKind::table: {
      if (!cfg.table.contains(image.content_hash)) {
        throw ProviderUnavailable(cfg.id + ": no vector for image " + image.content_hash);
      }
      return normalize(cfg.table.at(image.content_hash).get<std::vector<double>>());
    }
    case EmbedderKind::http:
      break;
  }

  const auto disk = cache_.root() / cfg.id / image.content_hash.substr(0, 2) / (image.content_hash + ".json");
  std::error_code ec;
  if (std::filesystem::exists(disk, ec)) return json::parse(read_file(disk)).get<std::vector<double>>();

  const auto url = split_url(cfg.url);
  httplib::Client cli(url.origin);
  cli.set_connection_timeout(static_cast<time_t>(cfg.timeout_s));
  cli.set_read_timeout(static_cast<time_t>(cfg.timeout_s));
  httplib::Headers headers;
  if (!cfg.auth_ref.empty()) headers.emplace("Authorization", "Bearer " + env_or_empty(cfg.auth_ref));
  const auto bytes = read_file_bytes(image.image_ref);
  const json body{{"model", cfg.model_name}, {"image", base64_encode(std::span<const std::uint8_t>(bytes))}};
  auto res = cli.Post(url.path.empty() ? "/" : url.path, headers, body.dump(), "application/json");
  if (!res) throw ProviderUnavailable(cfg.id + ": " + httplib::to_string(res.error()));
  if (res->status != 200) throw ProviderUnavailable(cfg.id + ": HTTP " + std::to_string(res->status));
  std::vector<double> v;
  try {
    v = normalize(json::parse(res->body).at("embedding").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ProviderUnavailable(cfg.id + ": malformed embedding response: " + e.what());
  }
  write_file_atomic(disk, json(v).dump());
  return v;
}

}  // namespace codewm
