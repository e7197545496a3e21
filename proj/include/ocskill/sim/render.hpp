#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ocskill/sim/world.hpp"

namespace ocskill::sim {

/// Row-major interleaved u8 image.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

inline constexpr Color kHoleColor = {30, 30, 30};
inline constexpr Color kEndEffectorColor = {45, 45, 55};

/// Smoothly textured table color at a world point.
Color table_color(Vec2 p);
std::uint8_t luminance(Color c);

/// Rasterizes objects (and optionally the end-effector disc) through `camera`.
Image render_objects(const std::vector<ObjectSpec>& objects, const CameraModel& camera, double ee_radius,
                     std::optional<Vec2> ee = std::nullopt);

Image render_external(const WorldConfig& config, const WorldState& state);

/// Grayscale crop centered on the end-effector; the end-effector itself is not drawn.
Image render_wrist(const WorldConfig& config, const WorldState& state);

/// Box-filter downsample by an integer factor.
Image downsample(const Image& img, int factor);
Image to_gray(const Image& img);

}  // namespace ocskill::sim
