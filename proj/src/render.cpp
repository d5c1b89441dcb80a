#include "codewm/render.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>

#include <spdlog/spdlog.h>

#ifndef CODEWM_CHROME_DEFAULT
#define CODEWM_CHROME_DEFAULT ""
#endif

namespace codewm {

using nlohmann::json;

// ---------------------------------------------------------------- viewport

int Viewport::screenshot_width() const { return static_cast<int>(std::lround(width_px * device_scale)); }
int Viewport::screenshot_height() const { return static_cast<int>(std::lround(height_px * device_scale)); }

void Viewport::validate() const {
  if (width_px <= 0 || height_px <= 0) throw Error("viewport dimensions must be positive");
  if (!(device_scale > 0)) throw Error("viewport device scale must be positive");
}

Viewport Viewport::for_screenshot(int width_px, int height_px) {
  if (width_px <= 0 || height_px <= 0) throw Error("viewport dimensions must be positive");
  Viewport best{width_px, height_px, 1.0};
  int best_dist = std::abs(width_px - 412);
  for (int k = 5; k <= 16; ++k) {
    // scale k/4 divides w exactly iff 4w is a multiple of k
    if ((4 * width_px) % k != 0 || (4 * height_px) % k != 0) continue;
    const int css_w = 4 * width_px / k;
    const int dist = std::abs(css_w - 412);
    if (dist < best_dist) {
      best = {css_w, 4 * height_px / k, k / 4.0};
      best_dist = dist;
    }
  }
  return best;
}

Viewport Viewport::parse(std::string_view spec) {
  static const std::regex re(R"(^\s*(\d+)\s*[xX]\s*(\d+)\s*(?:@\s*([0-9.]+))?\s*$)");
  std::cmatch m;
  if (!std::regex_match(spec.begin(), spec.end(), m, re)) {
    throw Error("viewport must look like 1080x2400 or 412x915@2.625, got '" + std::string(spec) + "'");
  }
  const int w = std::stoi(m[1].str());
  const int h = std::stoi(m[2].str());
  Viewport vp = m[3].matched ? Viewport{w, h, std::stod(m[3].str())} : for_screenshot(w, h);
  vp.validate();
  return vp;
}

std::string Viewport::to_string() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%dx%d@%g", width_px, height_px, device_scale);
  return buf;
}

std::string_view to_string(RenderVerdict v) {
  switch (v) {
    case RenderVerdict::ok: return "ok";
    case RenderVerdict::parse_fail: return "parse_fail";
    case RenderVerdict::nav_fail: return "nav_fail";
    case RenderVerdict::blank_render: return "blank_render";
  }
  return "?";
}

// ------------------------------------------------------------ static check

namespace {

bool is_tag_start(std::string_view s, std::size_t i) {
  return s[i] == '<' && i + 1 < s.size() && std::isalpha(static_cast<unsigned char>(s[i + 1]));
}

// Tag openers must end at a name boundary so "<head" does not match "<header".
std::size_t find_opener(const std::string& lower, std::string_view open, std::size_t from) {
  const bool tag = open.size() > 1 && std::isalpha(static_cast<unsigned char>(open[1]));
  for (auto a = lower.find(open, from); a != std::string::npos; a = lower.find(open, a + 1)) {
    const auto e = a + open.size();
    if (!tag || e >= lower.size() || !(std::isalnum(static_cast<unsigned char>(lower[e])) || lower[e] == '-')) return a;
  }
  return std::string::npos;
}

// Removes [open .. close] spans, e.g. comments or script bodies.
std::string drop_spans(const std::string& lower, std::string_view open, std::string_view close) {
  std::string out;
  std::size_t pos = 0;
  for (;;) {
    const auto a = find_opener(lower, open, pos);
    if (a == std::string::npos) break;
    out.append(lower, pos, a - pos);
    const auto b = lower.find(close, a + open.size());
    if (b == std::string::npos) return out;  // unterminated: the rest is swallowed
    pos = b + close.size();
  }
  out.append(lower, pos, std::string::npos);
  return out;
}

std::string tag_name_at(std::string_view s, std::size_t i) {
  std::size_t j = i + 1;
  if (j < s.size() && s[j] == '/') ++j;
  std::size_t k = j;
  while (k < s.size() && (std::isalnum(static_cast<unsigned char>(s[k])) || s[k] == '-')) ++k;
  return std::string(s.substr(j, k - j));
}

}  // namespace

StaticCheck renderability_check(std::string_view html) {
  if (trim(html).empty()) return {false, "empty"};
  bool any_tag = false;
  for (std::size_t i = 0; i < html.size() && !any_tag; ++i) any_tag = is_tag_start(html, i);
  if (!any_tag) return {false, "no_elements"};

  std::string s = to_lower(html);
  s = drop_spans(s, "<!--", "-->");
  s = drop_spans(s, "<script", "</script>");
  s = drop_spans(s, "<style", "</style>");
  s = drop_spans(s, "<head", "</head>");
  s = drop_spans(s, "<title", "</title>");
  if (const auto b = find_opener(s, "<body", 0); b != std::string::npos) {
    const auto gt = s.find('>', b);
    if (gt == std::string::npos) return {false, "empty_body"};
    s = s.substr(gt + 1);
  }
  // Anything left besides document-structure tags counts as body content.
  static const char* const kStructural[] = {"html", "head", "body", "meta", "link", "base", "!doctype"};
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '<') {
      const auto gt = s.find('>', i);
      if (gt == std::string::npos) break;
      const std::string name = s[i + 1] == '!' ? "!doctype" : tag_name_at(s, i);
      if (!name.empty() && std::none_of(std::begin(kStructural), std::end(kStructural),
                                        [&](const char* t) { return name == t; })) {
        return {true, {}};
      }
      i = gt;
      continue;
    }
    if (!std::isspace(static_cast<unsigned char>(s[i]))) return {true, {}};
  }
  return {false, "empty_body"};
}

bool is_fragment(std::string_view html) {
  const std::string s = to_lower(html);
  return s.find("<html") == std::string::npos && s.find("<body") == std::string::npos;
}

std::string wrap_fragment(std::string_view html) {
  return "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
         "<meta name=\"viewport\" content=\"width=device-width, initial-scale=1\"></head>\n<body>\n" +
         std::string(html) + "\n</body></html>\n";
}

// ------------------------------------------------------------------ assets

AssetMap AssetMap::load(const std::filesystem::path& manifest) {
  AssetMap m;
  const auto j = json::parse(read_file(manifest));
  for (const auto& [url, rel] : j.items()) {
    std::filesystem::path p = rel.get<std::string>();
    if (p.is_relative()) p = manifest.parent_path() / p;
    m.files_[url] = p;
  }
  return m;
}

const std::filesystem::path* AssetMap::find(const std::string& url) const {
  if (auto it = files_.find(url); it != files_.end()) return &it->second;
  const auto q = url.find('?');
  if (q != std::string::npos) {
    if (auto it = files_.find(url.substr(0, q)); it != files_.end()) return &it->second;
  }
  return nullptr;
}

std::filesystem::path default_browser_path() {
  if (const char* env = std::getenv("CODEWM_CHROME"); env && *env) return env;
  return CODEWM_CHROME_DEFAULT;
}

// ---------------------------------------------------------------- renderer

namespace {

std::string mime_for_asset(const std::filesystem::path& p) {
  const auto ext = to_lower(p.extension().string());
  if (ext == ".css") return "text/css";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".woff2") return "font/woff2";
  if (ext == ".woff") return "font/woff";
  if (ext == ".ttf") return "font/ttf";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

// Resolves after web fonts load and two animation frames have been produced.
constexpr const char* kSettleScript =
    "document.fonts.ready.then(() => new Promise(r => requestAnimationFrame(() => requestAnimationFrame(r))))"
    ".then(() => true)";

}  // namespace

Renderer::Renderer(RenderOptions opts) : opts_(std::move(opts)) {
  if (opts_.workers < 1) throw Error("render pool needs at least one worker");
  if (!opts_.asset_manifest.empty()) assets_ = AssetMap::load(opts_.asset_manifest);
  browser_ = std::make_unique<CdpBrowser>(opts_.browser);
  browser_pid_ = browser_->pid();

  const AssetMap* assets = &assets_;
  browser_->on("Fetch.requestPaused", [assets](CdpBrowser& b, const json& ev) {
    const auto& params = ev.at("params");
    const auto session = ev.value("sessionId", std::string());
    const auto id = params.at("requestId").get<std::string>();
    const auto url = params.at("request").at("url").get<std::string>();
    if (url.rfind("data:", 0) == 0 || url == "about:blank") {
      b.send("Fetch.continueRequest", {{"requestId", id}}, session);
    } else if (const auto* file = assets->find(url)) {
      std::string body;
      try {
        body = read_file(*file);
      } catch (const Error& e) {
        spdlog::warn("render: vendored asset for {} unreadable: {}", url, e.what());
        b.send("Fetch.failRequest", {{"requestId", id}, {"errorReason", "FileNotFound"}}, session);
        return;
      }
      b.send("Fetch.fulfillRequest",
             {{"requestId", id},
              {"responseCode", 200},
              {"responseHeaders", json::array({{{"name", "Content-Type"}, {"value", mime_for_asset(*file)}},
                                               {{"name", "Access-Control-Allow-Origin"}, {"value", "*"}}})},
              {"body", base64_encode(body)}},
             session);
    } else {
      b.send("Fetch.failRequest", {{"requestId", id}, {"errorReason", "BlockedByClient"}}, session);
    }
  });
}

Renderer::~Renderer() { shutdown(); }

void Renderer::shutdown() {
  std::lock_guard lock(mu_);
  if (browser_) {
    browser_->close();
    browser_.reset();
  }
  idle_.clear();
  open_pages_ = 0;
  cv_.notify_all();
}

int Renderer::browser_pid() const { return browser_pid_; }

Renderer::Page Renderer::open_page() {
  Page p;
  p.target_id = browser_->call("Target.createTarget", {{"url", "about:blank"}}).at("targetId").get<std::string>();
  p.session_id = browser_->call("Target.attachToTarget", {{"targetId", p.target_id}, {"flatten", true}})
                     .at("sessionId")
                     .get<std::string>();
  browser_->call("Page.enable", json::object(), p.session_id);
  browser_->call("Fetch.enable", {{"patterns", json::array({{{"urlPattern", "*"}}})}}, p.session_id);
  return p;
}

Renderer::Page Renderer::acquire() {
  std::unique_lock lock(mu_);
  for (;;) {
    if (!browser_) throw BrowserUnavailable("renderer has been shut down");
    if (!idle_.empty()) {
      Page p = std::move(idle_.back());
      idle_.pop_back();
      return p;
    }
    if (open_pages_ < opts_.workers) {
      ++open_pages_;
      lock.unlock();
      try {
        return open_page();
      } catch (...) {
        lock.lock();
        --open_pages_;
        cv_.notify_one();
        throw;
      }
    }
    cv_.wait(lock);
  }
}

void Renderer::release(Page page, bool healthy) {
  if (!healthy) {
    try {
      if (browser_) browser_->send("Target.closeTarget", {{"targetId", page.target_id}}, {});
    } catch (const Error&) {
    }
    browser_->clear_events(page.session_id);
  }
  std::lock_guard lock(mu_);
  if (healthy) idle_.push_back(std::move(page));
  else --open_pages_;
  cv_.notify_one();
}

std::vector<std::uint8_t> Renderer::capture(Page& page, const std::string& html, const Viewport& vp) {
  const auto timeout = std::chrono::milliseconds(static_cast<long>(opts_.timeout_s * 1000));
  if (!page.metrics || page.metrics->width_px != vp.width_px || page.metrics->height_px != vp.height_px ||
      page.metrics->device_scale != vp.device_scale) {
    browser_->call("Emulation.setDeviceMetricsOverride",
                   {{"width", vp.width_px},
                    {"height", vp.height_px},
                    {"deviceScaleFactor", vp.device_scale},
                    {"mobile", true},
                    {"screenOrientation", {{"type", "portraitPrimary"}, {"angle", 0}}}},
                   page.session_id, timeout);
    page.metrics = vp;
  }
  browser_->clear_events(page.session_id);
  const auto nav = browser_->call(
      "Page.navigate", {{"url", "data:text/html;charset=utf-8;base64," + base64_encode(html)}}, page.session_id,
      timeout);
  if (nav.contains("errorText") && !nav.at("errorText").get<std::string>().empty()) {
    throw RenderTimeout("navigation failed: " + nav.at("errorText").get<std::string>());
  }
  browser_->wait_event(page.session_id, "Page.loadEventFired", timeout);
  browser_->call("Runtime.evaluate", {{"expression", kSettleScript}, {"awaitPromise", true}, {"returnByValue", true}},
                 page.session_id, timeout);
  const auto shot = browser_->call("Page.captureScreenshot", {{"format", "png"}, {"fromSurface", true}},
                                   page.session_id, timeout);
  return base64_decode(shot.at("data").get<std::string>());
}

RenderResult Renderer::render(const std::string& html, const Viewport& vp, const std::filesystem::path& out_png) {
  vp.validate();
  const auto start = std::chrono::steady_clock::now();
  RenderResult res;
  auto finish = [&](RenderVerdict v, std::string detail) {
    res.verdict = v;
    res.detail = std::move(detail);
    res.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
  };

  const auto check = renderability_check(html);
  if (!check.pass) return finish(RenderVerdict::parse_fail, check.reason);
  std::string doc = html;
  if (is_fragment(doc)) {
    doc = wrap_fragment(doc);
    res.wrapped = true;
    spdlog::debug("render: wrapped fragment in document boilerplate");
  }

  Page page = acquire();
  std::vector<std::uint8_t> png;
  try {
    png = capture(page, doc, vp);
  } catch (const BrowserUnavailable&) {
    release(std::move(page), false);
    throw;
  } catch (const CdpError& e) {
    release(std::move(page), false);
    return finish(RenderVerdict::nav_fail, e.what());
  } catch (const RenderTimeout& e) {
    release(std::move(page), false);
    return finish(RenderVerdict::nav_fail, e.what());
  }
  release(std::move(page), true);

  Raster img;
  try {
    img = decode_image(png);
  } catch (const ImageDecodeError& e) {
    return finish(RenderVerdict::nav_fail, std::string("screenshot undecodable: ") + e.what());
  }
  // Keep the browser's own PNG bytes; re-encoding would only cost time.
  write_file_atomic(out_png, std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
  res.screenshot = StateImage{out_png, img.width(), img.height(), sha256_hex(std::span<const std::uint8_t>(png))};
  if (dominant_color_fraction(img) >= opts_.blank_threshold) return finish(RenderVerdict::blank_render, "uniform");
  return finish(RenderVerdict::ok, {});
}

}  // namespace codewm
