#include "codewm/image.hpp"

#include <png.h>
#include <jpeglib.h>

#include <cmath>
#include <csetjmp>
#include <cstring>
#include <unordered_map>

#include "codewm/action.hpp"

namespace codewm {

Raster::Raster(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error("negative raster size");
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

Rgb Raster::at(int x, int y) const {
  const auto i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Raster::set(int x, int y, Rgb c) {
  const auto i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  pixels_[i] = c.r;
  pixels_[i + 1] = c.g;
  pixels_[i + 2] = c.b;
}

namespace {

Raster decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw ImageDecodeError(std::string("png: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Raster out(static_cast<int>(image.width), static_cast<int>(image.height));
  // Composite any alpha over white, which is what a browser page shows.
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, out.data().data(), 0, nullptr)) {
    png_image_free(&image);
    throw ImageDecodeError(std::string("png: ") + image.message);
  }
  return out;
}

struct JpegErrorMgr {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

Raster decode_jpeg(const std::vector<std::uint8_t>& bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = [](j_common_ptr info) {
    auto* e = reinterpret_cast<JpegErrorMgr*>(info->err);
    (*info->err->format_message)(info, e->message);
    std::longjmp(e->jump, 1);
  };
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ImageDecodeError(std::string("jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  Raster out(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data().data() + static_cast<std::size_t>(cinfo.output_scanline) *
                                           cinfo.output_width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

Raster decode_image(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kPng, 4) == 0) return decode_png(bytes);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return decode_jpeg(bytes);
  }
  throw ImageDecodeError("unrecognized image format");
}

Raster load_image(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error& e) {
    throw ImageDecodeError(e.what());
  }
  return decode_image(bytes);
}

std::vector<std::uint8_t> encode_png(const Raster& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.data().data(), 0, nullptr)) {
    throw Error(std::string("png encode: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.data().data(), 0, nullptr)) {
    throw Error(std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

void save_png(const Raster& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Raster resize_area(const Raster& img, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0) throw Error("resize_area: non-positive target size");
  Raster out(new_width, new_height);
  const double sx = static_cast<double>(img.width()) / new_width;
  const double sy = static_cast<double>(img.height()) / new_height;
  for (int oy = 0; oy < new_height; ++oy) {
    const double y0 = oy * sy, y1 = (oy + 1) * sy;
    for (int ox = 0; ox < new_width; ++ox) {
      const double x0 = ox * sx, x1 = (ox + 1) * sx;
      double acc[3] = {0, 0, 0};
      double total = 0;
      for (int y = static_cast<int>(y0); y < static_cast<int>(std::ceil(y1)) && y < img.height(); ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        for (int x = static_cast<int>(x0); x < static_cast<int>(std::ceil(x1)) && x < img.width(); ++x) {
          const double w = wy * (std::min<double>(x + 1, x1) - std::max<double>(x, x0));
          const Rgb c = img.at(x, y);
          acc[0] += w * c.r;
          acc[1] += w * c.g;
          acc[2] += w * c.b;
          total += w;
        }
      }
      auto q = [&](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v / total), 0L, 255L)); };
      out.set(ox, oy, {q(acc[0]), q(acc[1]), q(acc[2])});
    }
  }
  return out;
}

double dominant_color_fraction(const Raster& img) {
  if (img.empty()) return 1.0;
  std::unordered_map<std::uint32_t, std::size_t> counts;
  std::size_t best = 0;
  const auto& px = img.data();
  for (std::size_t i = 0; i < px.size(); i += 3) {
    const std::uint32_t key = (std::uint32_t{px[i]} << 16) | (std::uint32_t{px[i + 1]} << 8) | px[i + 2];
    best = std::max(best, ++counts[key]);
  }
  return static_cast<double>(best) / (static_cast<double>(img.width()) * img.height());
}

StateImage StateImage::from_file(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error& e) {
    throw ImageDecodeError(e.what());
  }
  const Raster img = decode_image(bytes);
  if (img.empty()) throw ImageDecodeError("empty image: " + path.string());
  return StateImage{path, img.width(), img.height(), sha256_hex(std::span<const std::uint8_t>(bytes))};
}

StateImage StateImage::write_png(const Raster& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  return StateImage{path, img.width(), img.height(), sha256_hex(std::span<const std::uint8_t>(bytes))};
}

PixelPoint denormalize_point(const GridPoint& p, int width_px, int height_px) {
  auto map = [](int v, int extent) {
    const long px = std::lround(static_cast<double>(v) / 1000.0 * extent);
    return static_cast<int>(std::clamp<long>(px, 0, extent - 1));
  };
  return {map(p.x, width_px), map(p.y, height_px)};
}

PixelPoint denormalize_point(const GridPoint& p, const StateImage& image) {
  return denormalize_point(p, image.width_px, image.height_px);
}

}  // namespace codewm
