#pragma once

#include <filesystem>

#include "codewm/action.hpp"
#include "codewm/image.hpp"

namespace codewm {

inline constexpr Rgb kRed{255, 0, 0};
inline constexpr Rgb kYellow{255, 255, 0};
inline constexpr Rgb kBlue{0, 0, 255};
inline constexpr Rgb kGreen{0, 255, 0};

/// Whether annotate() draws anything for this action.
bool annotatable(const CanonicalAction& a);

/// Point actions (click, long_press, set_text): red ring of radius 3% of the
/// shorter side, red crosshair and a yellow center dot, all inside the ring's
/// bounding box. Swipes: blue line, green start marker, red end marker.
/// Direction-only scrolls: the same line centered on screen, 40% of the axis
/// length, pointing toward the direction. Other kinds leave the image as is.
Raster annotate(const Raster& img, const CanonicalAction& a);

/// Draws onto `image` and writes the result to out_png. Returns `image`
/// itself, untouched, when the action cannot be annotated.
StateImage annotate_action(const StateImage& image, const CanonicalAction& a, const std::filesystem::path& out_png);

/// Endpoints of the line drawn for a swipe or scroll, in pixels.
std::pair<PixelPoint, PixelPoint> gesture_line(const CanonicalAction& a, int width_px, int height_px);

}  // namespace codewm
