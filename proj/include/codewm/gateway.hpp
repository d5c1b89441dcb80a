#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <json.hpp>

#include "codewm/image.hpp"
#include "codewm/util.hpp"

namespace codewm {

/// Output-length ceiling for any request (evaluation max model length).
inline constexpr int kMaxOutputTokens = 16384;

/// Failure talking to a model endpoint. Carries the request key so a resumed
/// run can tell which cache entry is missing.
class EndpointError : public Error {
 public:
  EndpointError(const std::string& what, std::string request_key)
      : Error(what), request_key_(std::move(request_key)) {}
  const std::string& request_key() const { return request_key_; }

 private:
  std::string request_key_;
};
class AuthError : public EndpointError {
 public:
  using EndpointError::EndpointError;
};
class TimeoutError : public EndpointError {
 public:
  using EndpointError::EndpointError;
};
/// Rejected before dispatch (budget or shape violation).
class InvalidRequest : public EndpointError {
 public:
  using EndpointError::EndpointError;
};
class ProviderUnavailable : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class EndpointKind { http, mock };

struct ModelEndpoint {
  std::string id;
  EndpointKind kind = EndpointKind::http;
  std::string base_url;    // e.g. http://127.0.0.1:8000/v1
  std::string model_name;
  std::string auth_ref;    // env var holding the bearer token; empty = none
  int max_in_flight = 4;
  double timeout_s = 120.0;
  int max_retries = 3;
  double backoff_base_s = 0.5;
  int image_max_side = 0;  // 0 sends originals
  nlohmann::json script;   // mock endpoints: {"rules": [...], "default": ...}

  void validate() const;
  static ModelEndpoint from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

struct MessagePart {
  enum class Kind { text, image } kind = Kind::text;
  std::string text;
  StateImage image;

  static MessagePart of_text(std::string t) { return {Kind::text, std::move(t), {}}; }
  static MessagePart of_image(StateImage img) { return {Kind::image, {}, std::move(img)}; }
};

struct ChatRequest {
  std::vector<MessagePart> parts;
  double temperature = 0.0;
  int max_output_tokens = 4096;

  /// Text parts joined by newlines, images as "[image:<sha256>]".
  std::string flattened() const;
};

/// SHA-256 over the canonical request: endpoint id, model name, part contents
/// (images by content hash only) and sampling parameters.
std::string request_key(const ModelEndpoint& ep, const ChatRequest& req);

/// Content-addressed response store: <root>/<endpoint>/<key[0..2]>/<key>.txt
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root) : root_(std::move(root)) {}
  std::optional<std::string> get(const std::string& endpoint_id, const std::string& key) const;
  void put(const std::string& endpoint_id, const std::string& key, std::string_view text) const;
  std::filesystem::path path_for(const std::string& endpoint_id, const std::string& key) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  /// One network attempt; throws EndpointError (transient), AuthError or TimeoutError.
  virtual std::string complete(const ModelEndpoint& ep, const ChatRequest& req,
                               const std::string& key) = 0;
};

/// Transient failure eligible for retry.
class TransientError : public EndpointError {
 public:
  using EndpointError::EndpointError;
};

std::unique_ptr<ChatProvider> make_http_provider();
/// Deterministic scripted provider. Rules are tried in order; a rule matches
/// when every given condition holds: "match" (ECMAScript regex searched in the
/// flattened prompt), "key_prefix", "temperature". The reply is "response"
/// with $1.. replaced by regex groups. "fail_times": n makes the first n hits
/// fail transiently; "fail": "auth"|"timeout" always fails; "delay_ms" sleeps.
std::unique_ptr<ChatProvider> make_mock_provider(const nlohmann::json& script);

// ---------------------------------------------------------------- embeddings

enum class EmbedderKind { fallback, http, table };

struct EmbedderConfig {
  std::string id;
  EmbedderKind kind = EmbedderKind::fallback;
  std::string url;
  std::string model_name;
  std::string auth_ref;
  double timeout_s = 60.0;
  bool allow_fallback = false;
  nlohmann::json table;  // table kind: {"<content sha256>": [floats...]}

  static EmbedderConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

/// 32x32 area-averaged grayscale downsample, mean-centered, L2-normalized.
/// A uniform image centers to zero; it then embeds as the constant unit
/// vector signed by (mean - 0.5), so dark and light blanks are antipodal.
std::vector<double> fallback_embedding(const Raster& img);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// ------------------------------------------------------------------ gateway

struct GatewayConfig {
  std::filesystem::path cache_dir = "cache";
  std::vector<ModelEndpoint> endpoints;
  std::vector<EmbedderConfig> embedders;
  nlohmann::json extra;  // other sections (render, ...) passed through

  static GatewayConfig load(const std::filesystem::path& path);
  static GatewayConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

struct EndpointStats {
  std::atomic<int> network_calls{0};
  std::atomic<int> cache_hits{0};
  std::atomic<int> in_flight{0};
  std::atomic<int> max_observed_in_flight{0};
};

class Gateway {
 public:
  explicit Gateway(GatewayConfig cfg);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  const ModelEndpoint& endpoint(const std::string& id) const;
  bool has_endpoint(const std::string& id) const;

  std::string chat(const std::string& endpoint_id, const ChatRequest& req);

  /// Unit-norm embedding; deterministic per (provider, image content).
  std::vector<double> embed(const std::string& provider_id, const StateImage& image);
  bool has_embedder(const std::string& id) const;

  const EndpointStats& stats(const std::string& endpoint_id) const;
  const GatewayConfig& config() const { return cfg_; }

  /// Overrides the provider behind an endpoint (tests inject instrumented ones).
  void set_provider(const std::string& endpoint_id, std::unique_ptr<ChatProvider> provider);

 private:
  struct Slot;
  Slot& slot(const std::string& id) const;
  std::vector<double> embed_uncached(const EmbedderConfig& cfg, const StateImage& image);

  GatewayConfig cfg_;
  ResponseCache cache_;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
  std::map<std::string, EmbedderConfig> embedders_;
  mutable std::mutex embed_mu_;
  std::map<std::string, std::vector<double>> embed_memo_;
};

}  // namespace codewm
