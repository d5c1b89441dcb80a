#pragma once

#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "codewm/cdp.hpp"
#include "codewm/image.hpp"

namespace codewm {

class RenderTimeout : public Error {
 public:
  using Error::Error;
};

/// CSS viewport; screenshots come out at width_px*device_scale by height_px*device_scale.
struct Viewport {
  int width_px = 412;
  int height_px = 915;
  double device_scale = 1.0;

  int screenshot_width() const;
  int screenshot_height() const;
  void validate() const;

  /// Viewport whose screenshot has exactly these pixel dimensions. Picks the
  /// scale k/4 (k = 4..16) dividing both sides with CSS width nearest 412,
  /// else scale 1.
  static Viewport for_screenshot(int width_px, int height_px);
  /// "WxH" (screenshot pixels, as for_screenshot) or "WxH@S" (CSS pixels and scale).
  static Viewport parse(std::string_view spec);
  std::string to_string() const;
};

enum class RenderVerdict { ok, parse_fail, nav_fail, blank_render };
std::string_view to_string(RenderVerdict v);

struct StaticCheck {
  bool pass = false;
  std::string reason;  // empty | no_elements | empty_body
};

/// Cheap pre-render gate: fails on empty input, on text without any element
/// tag, or when the lenient parse leaves nothing inside the body.
StaticCheck renderability_check(std::string_view html);

/// True when the markup has neither an <html> nor a <body> tag.
bool is_fragment(std::string_view html);
std::string wrap_fragment(std::string_view html);

struct RenderResult {
  RenderVerdict verdict = RenderVerdict::parse_fail;
  std::optional<StateImage> screenshot;
  double elapsed_s = 0.0;
  std::string detail;
  bool wrapped = false;  // a fragment was wrapped in boilerplate before rendering
};

/// Maps framework URLs (Bootstrap, Tailwind, ...) to local files so renders
/// never touch the network. JSON object {"<url>": "<path relative to manifest>"}.
class AssetMap {
 public:
  AssetMap() = default;
  static AssetMap load(const std::filesystem::path& manifest);
  /// Exact match first, then the URL with its query string removed.
  const std::filesystem::path* find(const std::string& url) const;
  std::size_t size() const { return files_.size(); }

 private:
  std::map<std::string, std::filesystem::path> files_;
};

/// $CODEWM_CHROME, else the build's configured default.
std::filesystem::path default_browser_path();

struct RenderOptions {
  std::filesystem::path browser = default_browser_path();
  int workers = 4;
  double timeout_s = 15.0;
  std::filesystem::path asset_manifest;  // optional
  double blank_threshold = 0.995;
};

/// One long-lived browser with up to `workers` page sessions. render() may be
/// called from many threads; each call holds one page for its duration.
class Renderer {
 public:
  explicit Renderer(RenderOptions opts = {});
  ~Renderer();
  Renderer(const Renderer&) = delete;
  Renderer& operator=(const Renderer&) = delete;

  /// Checks, renders and captures `html`, writing the PNG to out_png when a
  /// screenshot is produced. Failures are reported in the verdict.
  RenderResult render(const std::string& html, const Viewport& vp, const std::filesystem::path& out_png);

  void shutdown();
  int browser_pid() const;
  const RenderOptions& options() const { return opts_; }

 private:
  struct Page {
    std::string target_id;
    std::string session_id;
    std::optional<Viewport> metrics;
  };
  Page acquire();
  void release(Page page, bool healthy);
  Page open_page();
  std::vector<std::uint8_t> capture(Page& page, const std::string& html, const Viewport& vp);

  RenderOptions opts_;
  AssetMap assets_;
  std::unique_ptr<CdpBrowser> browser_;
  int browser_pid_ = -1;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Page> idle_;
  int open_pages_ = 0;
};

}  // namespace codewm
