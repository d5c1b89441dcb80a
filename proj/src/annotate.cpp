#include "codewm/annotate.hpp"

#include <cmath>

namespace codewm {

namespace {

void fill_disc(Raster& img, PixelPoint c, int r, Rgb color) {
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy <= r * r) img.plot(c.x + dx, c.y + dy, color);
    }
  }
}

void ring(Raster& img, PixelPoint c, int r, int thickness, Rgb color) {
  const int inner = std::max(0, r - thickness);
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const int d2 = dx * dx + dy * dy;
      if (d2 <= r * r && d2 > inner * inner) img.plot(c.x + dx, c.y + dy, color);
    }
  }
}

// Thick segment: every pixel within half_width of the segment a-b.
void thick_line(Raster& img, PixelPoint a, PixelPoint b, int half_width, Rgb color) {
  const int x0 = std::min(a.x, b.x) - half_width, x1 = std::max(a.x, b.x) + half_width;
  const int y0 = std::min(a.y, b.y) - half_width, y1 = std::max(a.y, b.y) + half_width;
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  for (int y = std::max(0, y0); y <= std::min(img.height() - 1, y1); ++y) {
    for (int x = std::max(0, x0); x <= std::min(img.width() - 1, x1); ++x) {
      double t = len2 > 0 ? ((x - a.x) * vx + (y - a.y) * vy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = x - (a.x + t * vx), ey = y - (a.y + t * vy);
      if (ex * ex + ey * ey <= static_cast<double>(half_width) * half_width) img.set(x, y, color);
    }
  }
}

}  // namespace

bool annotatable(const CanonicalAction& a) {
  switch (a.kind) {
    case ActionKind::click:
    case ActionKind::long_press:
    case ActionKind::set_text:
      return a.point.has_value();
    case ActionKind::swipe:
      return a.point && a.end_point;
    case ActionKind::scroll_direction:
      return a.direction.has_value();
    default:
      return false;
  }
}

std::pair<PixelPoint, PixelPoint> gesture_line(const CanonicalAction& a, int w, int h) {
  if (a.kind == ActionKind::swipe) {
    return {denormalize_point(*a.point, w, h), denormalize_point(*a.end_point, w, h)};
  }
  const PixelPoint c{w / 2, h / 2};
  const int half_v = static_cast<int>(std::lround(0.2 * h));
  const int half_h = static_cast<int>(std::lround(0.2 * w));
  switch (*a.direction) {
    case Direction::up: return {{c.x, c.y + half_v}, {c.x, c.y - half_v}};
    case Direction::down: return {{c.x, c.y - half_v}, {c.x, c.y + half_v}};
    case Direction::left: return {{c.x + half_h, c.y}, {c.x - half_h, c.y}};
    case Direction::right: return {{c.x - half_h, c.y}, {c.x + half_h, c.y}};
  }
  return {c, c};
}

Raster annotate(const Raster& img, const CanonicalAction& a) {
  if (!annotatable(a)) return img;
  Raster out = img;
  const int shorter = std::min(img.width(), img.height());
  if (a.kind == ActionKind::swipe || a.kind == ActionKind::scroll_direction) {
    const auto [from, to] = gesture_line(a, img.width(), img.height());
    const int half_width = std::max(2, shorter / 200);
    const int marker = std::max(4, static_cast<int>(std::lround(0.015 * shorter)));
    thick_line(out, from, to, half_width, kBlue);
    fill_disc(out, from, marker, kGreen);
    fill_disc(out, to, marker, kRed);
    return out;
  }
  const PixelPoint c = denormalize_point(*a.point, img.width(), img.height());
  const int r = std::max(4, static_cast<int>(std::lround(0.03 * shorter)));
  const int thickness = std::max(2, r / 6);
  ring(out, c, r, thickness, kRed);
  const int arm = thickness / 2;
  for (int d = -r; d <= r; ++d) {
    for (int w = -arm; w <= arm; ++w) {
      out.plot(c.x + d, c.y + w, kRed);
      out.plot(c.x + w, c.y + d, kRed);
    }
  }
  fill_disc(out, c, std::max(2, r / 4), kYellow);
  return out;
}

StateImage annotate_action(const StateImage& image, const CanonicalAction& a, const std::filesystem::path& out_png) {
  if (!annotatable(a)) return image;
  return StateImage::write_png(annotate(image.decode(), a), out_png);
}

}  // namespace codewm
