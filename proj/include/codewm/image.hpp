#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "codewm/util.hpp"

namespace codewm {

class ImageDecodeError : public Error {
 public:
  using Error::Error;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGB bitmap, row-major.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Rgb fill = {});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  /// Bounds-checked write; out-of-range pixels are ignored.
  void plot(int x, int y, Rgb c) {
    if (x >= 0 && y >= 0 && x < width_ && y < height_) set(x, y, c);
  }

  const std::vector<std::uint8_t>& data() const { return pixels_; }
  std::vector<std::uint8_t>& data() { return pixels_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

/// Decodes PNG or JPEG bytes (sniffed from the magic number).
Raster decode_image(const std::vector<std::uint8_t>& bytes);
Raster load_image(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Raster& img);
void save_png(const Raster& img, const std::filesystem::path& path);

/// Box-filter resample (each output pixel averages the source area it covers).
Raster resize_area(const Raster& img, int new_width, int new_height);

/// Fraction of pixels sharing the most common color.
double dominant_color_fraction(const Raster& img);

/// A screenshot referenced by path, with its dimensions and content hash.
struct StateImage {
  std::filesystem::path image_ref;
  int width_px = 0;
  int height_px = 0;
  std::string content_hash;  // sha256 of the file bytes

  /// Reads the file, validates it decodes, and fills dimensions and hash.
  static StateImage from_file(const std::filesystem::path& path);
  /// Writes `img` as PNG to `path` and describes it.
  static StateImage write_png(const Raster& img, const std::filesystem::path& path);

  Raster decode() const { return load_image(image_ref); }

  friend bool operator==(const StateImage& a, const StateImage& b) {
    return a.content_hash == b.content_hash && a.width_px == b.width_px &&
           a.height_px == b.height_px;
  }
};

struct PixelPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

struct GridPoint;

/// Maps a [0,1000] grid point to pixel coordinates, clamped to the last pixel.
PixelPoint denormalize_point(const GridPoint& p, int width_px, int height_px);
PixelPoint denormalize_point(const GridPoint& p, const StateImage& image);

}  // namespace codewm
