#include "ocskill/sim/render.hpp"

#include <algorithm>
#include <cmath>

#include "ocskill/errors.hpp"

namespace ocskill::sim {

Color table_color(Vec2 p) {
  const double t = 5.0 * std::sin(2.0 * M_PI * 1.5 * p.x + 0.7) * std::cos(2.0 * M_PI * 1.1 * p.y) +
                   3.0 * std::sin(2.0 * M_PI * 0.6 * (p.x + p.y));
  auto ch = [t](double base) { return static_cast<std::uint8_t>(std::lround(std::clamp(base + t, 0.0, 255.0))); };
  return {ch(150.0), ch(140.0), ch(125.0)};
}

std::uint8_t luminance(Color c) {
  return static_cast<std::uint8_t>(std::lround(0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]));
}

namespace {

// Geometry shared by both cameras, evaluated in coordinates relative to an origin.
struct LocalObject {
  ObjectSpec spec;
  Vec2 rel;  // center relative to the origin
  bool socket;
  double hole_half;
};

bool covers(const LocalObject& o, double lx, double ly) {
  const double dx = lx - o.rel.x, dy = ly - o.rel.y;
  if (o.spec.shape == ShapeKind::disc) {
    const double R = 0.5 * o.spec.size.x;
    return dx * dx + dy * dy <= R * R;
  }
  return std::abs(dx) <= 0.5 * o.spec.size.x && std::abs(dy) <= 0.5 * o.spec.size.y;
}

bool in_hole(const LocalObject& o, double lx, double ly) {
  if (!o.socket) return false;
  const double top = o.rel.y + 0.5 * o.spec.size.y;
  return std::abs(lx - (o.rel.x + o.spec.hole_offset)) <= o.hole_half && ly <= top && ly >= top - o.spec.hole_depth;
}

std::vector<LocalObject> localize(const std::vector<ObjectSpec>& objects, Vec2 origin, double ee_radius) {
  std::vector<LocalObject> out;
  for (const auto& o : objects) {
    out.push_back({o, o.center - origin, o.kind == ObjectKind::socket, ee_radius + o.hole_tolerance});
  }
  return out;
}

std::vector<ObjectSpec> scene_objects(const WorldState& s) {
  std::vector<ObjectSpec> objs = s.obstacles;
  if (s.socket) objs.push_back(*s.socket);
  return objs;
}

}  // namespace

Image render_objects(const std::vector<ObjectSpec>& objects, const CameraModel& camera, double ee_radius,
                     std::optional<Vec2> ee) {
  const int n = camera.image_size;
  Image img(n, n, 3);
  const auto local = localize(objects, {0.0, 0.0}, ee_radius);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vec2 w = camera.pixel_to_world_exact({j + 0.5, i + 0.5});
      Color c = table_color(w);
      for (const auto& o : local) {
        if (!covers(o, w.x, w.y)) continue;
        c = in_hole(o, w.x, w.y) ? kHoleColor : o.spec.color;
      }
      if (ee && distance(w, *ee) <= ee_radius) c = kEndEffectorColor;
      for (int ch = 0; ch < 3; ++ch) img.at(i, j, ch) = c[static_cast<std::size_t>(ch)];
    }
  }
  return img;
}

Image render_external(const WorldConfig& config, const WorldState& state) {
  return render_objects(scene_objects(state), state.camera, config.ee_radius, state.ee_pos);
}

Image render_wrist(const WorldConfig& config, const WorldState& state) {
  const int n = config.wrist_size;
  const double s = config.wrist_fov / n;
  const int bg = luminance(table_color({0.0, 0.0}));
  const int hole = luminance(kHoleColor);
  Image img(n, n, 1);
  const auto local = localize(scene_objects(state), state.ee_pos, config.ee_radius);
  std::vector<int> body;
  for (const auto& o : local) body.push_back(luminance(o.spec.color));
  // 2x2 supersampling keeps sub-pixel edge positions visible to the policy.
  static constexpr double kSub[2] = {0.25, 0.75};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      int acc = 0;
      for (double sy : kSub) {
        const double ly = -(i + sy - 0.5 * n) * s;
        for (double sx : kSub) {
          const double lx = (j + sx - 0.5 * n) * s;
          int v = bg;
          for (std::size_t k = 0; k < local.size(); ++k) {
            if (covers(local[k], lx, ly)) v = in_hole(local[k], lx, ly) ? hole : body[k];
          }
          acc += v;
        }
      }
      img.at(i, j) = static_cast<std::uint8_t>((acc + 2) / 4);
    }
  }
  return img;
}

Image downsample(const Image& img, int factor) {
  if (factor < 1 || img.height % factor || img.width % factor) throw ConfigError("downsample: bad factor");
  Image out(img.height / factor, img.width / factor, img.channels);
  for (int i = 0; i < out.height; ++i)
    for (int j = 0; j < out.width; ++j)
      for (int c = 0; c < img.channels; ++c) {
        int acc = 0;
        for (int a = 0; a < factor; ++a)
          for (int b = 0; b < factor; ++b) acc += img.at(i * factor + a, j * factor + b, c);
        out.at(i, j, c) = static_cast<std::uint8_t>((acc + factor * factor / 2) / (factor * factor));
      }
  return out;
}

Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.height, img.width, 1);
  for (int i = 0; i < img.height; ++i)
    for (int j = 0; j < img.width; ++j) out.at(i, j) = luminance({img.at(i, j, 0), img.at(i, j, 1), img.at(i, j, 2)});
  return out;
}

}  // namespace ocskill::sim
