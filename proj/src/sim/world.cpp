#include "ocskill/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>

#include "ocskill/errors.hpp"

namespace ocskill::sim {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WorldConfig, workspace, v_max, dt, ee_radius, contact_stiffness,
                                                wrench_scale, hole_depth, external_size, wrist_size, wrist_fov,
                                                calibration_noise_max, object_gap, edge_margin, approach_clearance,
                                                approach_side_margin, ee_clearance, rl_start_height, limited_lateral,
                                                limited_height_low, limited_height_high, max_rejection_samples)

std::string to_string(SocketVariant v) {
  switch (v) {
    case SocketVariant::VGA: return "VGA";
    case SocketVariant::RJ45: return "RJ45";
    case SocketVariant::Emodel: return "Emodel";
    case SocketVariant::USBA: return "USBA";
  }
  return "?";
}

SocketVariant parse_variant(const std::string& name) {
  for (auto v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown socket variant '" + name + "' (expected VGA, RJ45, Emodel or USBA)");
}

const VariantProfile& variant_profile(SocketVariant v) {
  static const std::array<VariantProfile, 4> profiles = {{
      {SocketVariant::VGA, {40, 75, 215}, {0.13, 0.035}, 0.010, 0.008},
      {SocketVariant::RJ45, {50, 180, 75}, {0.13, 0.030}, -0.010, 0.010},
      {SocketVariant::Emodel, {235, 140, 30}, {0.12, 0.040}, 0.0, 0.010},
      {SocketVariant::USBA, {150, 60, 180}, {0.14, 0.032}, 0.015, 0.010},
  }};
  return profiles[static_cast<std::size_t>(v)];
}

const std::vector<ObstacleTemplate>& obstacle_catalog() {
  // Two entries reuse socket colors with a different shape or size.
  static const std::vector<ObstacleTemplate> catalog = {
      {ShapeKind::rect, {0.12, 0.06}, {200, 40, 40}},   {ShapeKind::disc, {0.08, 0.08}, {220, 200, 40}},
      {ShapeKind::rect, {0.06, 0.14}, {40, 190, 200}},  {ShapeKind::disc, {0.07, 0.07}, {40, 75, 215}},
      {ShapeKind::rect, {0.16, 0.05}, {50, 180, 75}},   {ShapeKind::disc, {0.10, 0.10}, {90, 90, 90}},
      {ShapeKind::rect, {0.08, 0.08}, {230, 120, 170}}, {ShapeKind::disc, {0.06, 0.06}, {140, 90, 50}},
  };
  return catalog;
}

Vec2 CameraModel::world_to_pixel(Vec2 p) const {
  return {affine[0] * p.x + affine[1] * p.y + affine[2], affine[3] * p.x + affine[4] * p.y + affine[5]};
}

Vec2 CameraModel::pixel_to_world_exact(Vec2 uv) const {
  const double det = determinant();
  if (std::abs(det) < 1e-12) throw DomainError("camera affine map is singular");
  const double du = uv.x - affine[2];
  const double dv = uv.y - affine[5];
  return {(affine[4] * du - affine[1] * dv) / det, (-affine[3] * du + affine[0] * dv) / det};
}

WorldConfig load_world_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open world config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed world config " + path + ": " + e.what());
  }
  // The global config file may nest the world section.
  if (j.contains("world")) j = j["world"];
  WorldConfig c = j.get<WorldConfig>();
  if (c.v_max <= 0 || c.dt <= 0 || c.ee_radius <= 0 || c.workspace <= 0) {
    throw ConfigError("world config: v_max, dt, ee_radius and workspace must be positive");
  }
  return c;
}

void save_world_config(const WorldConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << nlohmann::json(config).dump(2) << "\n";
}

const ObjectSpec& WorldState::target() const {
  if (!socket) throw UsageError("world state has no socket");
  return *socket;
}

namespace {

Box approach_zone(const WorldConfig& c, const ObjectSpec& s) {
  const Box b = s.bounds();
  const double w = b.size.x + 2.0 * c.approach_side_margin;
  return {{b.center.x, b.top() + 0.5 * c.approach_clearance}, {w, c.approach_clearance}};
}

ObjectSpec make_socket(const WorldConfig& c, SocketVariant v, Vec2 center) {
  const auto& p = variant_profile(v);
  ObjectSpec s;
  s.kind = ObjectKind::socket;
  s.center = center;
  s.shape = ShapeKind::rect;
  s.size = p.size;
  s.color = p.color;
  s.socket_variant = v;
  s.hole_tolerance = p.hole_tolerance;
  s.hole_offset = p.hole_offset;
  s.hole_depth = c.hole_depth;
  s.catalog_id = static_cast<int>(v);
  return s;
}

// Outward unit normal of the object boundary nearest to p.
Vec2 outward_normal(const ObjectSpec& obj, Vec2 p) {
  if (obj.shape == ShapeKind::disc) {
    Vec2 d = p - obj.center;
    const double n = d.norm();
    return n > 1e-12 ? d * (1.0 / n) : Vec2{0.0, 1.0};
  }
  const Box b = obj.bounds();
  const Vec2 q{std::clamp(p.x, b.left(), b.right()), std::clamp(p.y, b.bottom(), b.top())};
  Vec2 d = p - q;
  const double n = d.norm();
  if (n > 1e-12) return d * (1.0 / n);
  // Inside: leave through the nearest face.
  const double dl = p.x - b.left(), dr = b.right() - p.x, db = p.y - b.bottom(), dt = b.top() - p.y;
  const double m = std::min({dl, dr, db, dt});
  if (m == dt) return {0.0, 1.0};
  if (m == db) return {0.0, -1.0};
  if (m == dl) return {-1.0, 0.0};
  return {1.0, 0.0};
}

}  // namespace

double signed_distance(const ObjectSpec& obj, Vec2 p) {
  if (obj.shape == ShapeKind::disc) return distance(p, obj.center) - 0.5 * obj.size.x;
  const Box b = obj.bounds();
  const double dx = std::max(b.left() - p.x, p.x - b.right());
  const double dy = std::max(b.bottom() - p.y, p.y - b.top());
  const double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
  return std::hypot(ox, oy) + std::min(std::max(dx, dy), 0.0);
}

double ee_clearance(const WorldConfig& config, const WorldState& state) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : state.obstacles) best = std::min(best, signed_distance(o, state.ee_pos) - config.ee_radius);
  if (state.socket && state.insertion_depth <= 0.0) {
    best = std::min(best, signed_distance(*state.socket, state.ee_pos) - config.ee_radius);
  }
  return best;
}

WorldState reset_scene(const WorldConfig& config, std::uint64_t seed, SocketVariant task, int n_obstacles) {
  if (n_obstacles < 0 || n_obstacles > 8) throw ConfigError("n_obstacles must be within 0..8");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(task), static_cast<std::uint32_t>(n_obstacles)};
  std::mt19937_64 rng(seq);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  const double W = config.workspace;
  const double m = config.edge_margin;
  WorldState s;
  s.camera.image_size = config.external_size;
  const double scale = config.external_size / W;
  s.camera.affine = {scale, 0.0, 0.0, 0.0, -scale, static_cast<double>(config.external_size)};
  const double cn = config.calibration_noise_max;
  s.camera.calibration_noise = cn > 0.0 ? Vec2{uni(-cn, cn), uni(-cn, cn)} : Vec2{};

  const auto& prof = variant_profile(task);
  const double hw = 0.5 * prof.size.x, hh = 0.5 * prof.size.y;
  const double ymax = W - m - config.approach_clearance - hh;
  if (ymax <= m + hh) throw SceneGenerationError("workspace too small for the socket approach zone");
  const ObjectSpec socket = make_socket(config, task, {uni(m + hw, W - m - hw), uni(m + hh, ymax)});
  s.socket = socket;
  const Box zone = approach_zone(config, socket);

  int rejections = 0;
  const auto& catalog = obstacle_catalog();
  while (static_cast<int>(s.obstacles.size()) < n_obstacles) {
    const auto id = std::uniform_int_distribution<std::size_t>(0, catalog.size() - 1)(rng);
    const auto& t = catalog[id];
    ObjectSpec o;
    o.kind = ObjectKind::obstacle;
    o.shape = t.shape;
    o.size = t.size;
    o.color = t.color;
    o.catalog_id = static_cast<int>(kAllVariants.size() + id);
    const Vec2 ext = o.bounds().size;
    o.center = {uni(m + 0.5 * ext.x, W - m - 0.5 * ext.x), uni(m + 0.5 * ext.y, W - m - 0.5 * ext.y)};
    const Box b = o.bounds();
    bool ok = !b.overlaps(socket.bounds(), config.object_gap) && !b.overlaps(zone, config.object_gap);
    for (const auto& other : s.obstacles) ok = ok && !b.overlaps(other.bounds(), config.object_gap);
    if (ok) {
      s.obstacles.push_back(o);
    } else if (++rejections > config.max_rejection_samples) {
      throw SceneGenerationError("could not place obstacles after " + std::to_string(rejections) +
                                 " rejection samples (workspace too crowded)");
    }
  }

  const double r = config.ee_radius;
  for (;;) {
    s.ee_pos = {uni(r + m, W - r - m), uni(r + m, W - r - m)};
    if (ee_clearance(config, s) >= config.ee_clearance) break;
    if (++rejections > config.max_rejection_samples) {
      throw SceneGenerationError("could not place the end-effector in free space");
    }
  }
  return s;
}

Vec2 clamp_action(const WorldConfig& config, Vec2 a) {
  const double v = config.v_max;
  auto c = [v](double x) { return std::isfinite(x) ? std::clamp(x, -v, v) : 0.0; };
  return {c(a.x), c(a.y)};
}

Vec2 limit_velocity(Vec2 v, double limit) {
  const double m = std::max(std::abs(v.x), std::abs(v.y));
  return m > limit ? v * (limit / m) : v;
}

Vec2 goal_pose(const WorldConfig& config, const ObjectSpec& socket) {
  return {socket.hole_x(), socket.top() + config.ee_radius - socket.hole_depth};
}

double required_depth(const ObjectSpec& socket) { return socket.hole_depth - 1e-9; }

Vec2 rl_start_pose(const WorldConfig& config, const ObjectSpec& socket) {
  return {socket.hole_x(), socket.top() + config.ee_radius + config.rl_start_height};
}

bool in_goal(const WorldConfig& config, const WorldState& state) {
  if (!state.socket) return false;
  const auto& s = *state.socket;
  return distance(state.ee_pos, goal_pose(config, s)) <= s.hole_tolerance && state.insertion_depth >= required_depth(s);
}

WorldState step(const WorldConfig& config, const WorldState& state, Vec2 action, double dt) {
  const Vec2 a = clamp_action(config, action);
  const double r = config.ee_radius;
  const double k = config.contact_stiffness;
  const double W = config.workspace;

  WorldState out = state;
  ++out.time_step;
  out.contact_wrench = {};
  out.obstacle_contact = false;

  Vec2 p = state.ee_pos + a * dt;
  auto clamp_ws = [W](Vec2 q) { return Vec2{std::clamp(q.x, 0.0, W), std::clamp(q.y, 0.0, W)}; };
  p = clamp_ws(p);
  Vec2 wrench{};

  bool in_hole = false;
  if (state.socket) {
    const auto& s = *state.socket;
    const double face_y = s.top() + r;
    const double bottom_y = face_y - s.hole_depth;
    const double hx = s.hole_x();
    const bool inside_before = state.insertion_depth > 0.0;
    const bool entering = !inside_before && state.ee_pos.y >= face_y - 1e-9 && p.y < face_y &&
                          std::abs(p.x - hx) < s.hole_tolerance;
    if ((inside_before || entering) && p.y < face_y) {
      in_hole = true;
      const double lim = s.hole_tolerance - 1e-6;
      const double off = p.x - hx;
      if (std::abs(off) > lim) {
        const double pen = std::abs(off) - lim;
        const double sign = off > 0 ? 1.0 : -1.0;
        p.x = hx + sign * lim;
        wrench.x -= sign * k * pen;
      }
      if (p.y < bottom_y) {
        wrench.y += k * (bottom_y - p.y);
        p.y = bottom_y;
      }
      out.insertion_depth = std::clamp(face_y - p.y, 0.0, s.hole_depth);
    } else {
      out.insertion_depth = 0.0;
    }
  }

  if (!in_hole) {
    std::vector<const ObjectSpec*> solids;
    for (const auto& o : state.obstacles) solids.push_back(&o);
    if (state.socket) solids.push_back(&*state.socket);
    for (int iter = 0; iter < 3; ++iter) {
      bool moved = false;
      for (const ObjectSpec* o : solids) {
        const double d = signed_distance(*o, p);
        if (d >= r) continue;
        const double pen = r - d;
        const Vec2 n = outward_normal(*o, p);
        p += n * pen;
        wrench += n * (k * pen);
        if (o->kind == ObjectKind::obstacle) out.obstacle_contact = true;
        moved = true;
      }
      p = clamp_ws(p);
      if (!moved) break;
    }
  }

  out.ee_vel = (p - state.ee_pos) * (1.0 / dt);
  out.ee_pos = p;
  out.contact_wrench = wrench;
  return out;
}

std::vector<Vec2> sense_obstacle_points(const WorldState& state, double noise_std, std::uint64_t seed,
                                        double spacing) {
  if (spacing <= 0.0) throw ConfigError("point spacing must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);
  auto jitter = [&](Vec2 p) { return noise_std > 0.0 ? Vec2{p.x + noise(rng), p.y + noise(rng)} : p; };
  std::vector<Vec2> pts;
  for (const auto& o : state.obstacles) {
    if (o.shape == ShapeKind::disc) {
      const double R = 0.5 * o.size.x;
      const int n = std::max(8, static_cast<int>(std::ceil(2.0 * M_PI * R / spacing)));
      for (int i = 0; i < n; ++i) {
        const double t = 2.0 * M_PI * i / n;
        pts.push_back(jitter({o.center.x + R * std::cos(t), o.center.y + R * std::sin(t)}));
      }
    } else {
      const Box b = o.bounds();
      const std::array<Vec2, 4> corners = {Vec2{b.left(), b.bottom()}, Vec2{b.right(), b.bottom()},
                                           Vec2{b.right(), b.top()}, Vec2{b.left(), b.top()}};
      for (int e = 0; e < 4; ++e) {
        const Vec2 a = corners[static_cast<std::size_t>(e)];
        const Vec2 c = corners[static_cast<std::size_t>((e + 1) % 4)];
        const int n = std::max(1, static_cast<int>(std::ceil(distance(a, c) / spacing)));
        for (int i = 0; i < n; ++i) pts.push_back(jitter(a + (c - a) * (static_cast<double>(i) / n)));
      }
    }
  }
  return pts;
}

}  // namespace ocskill::sim
