#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ocskill/sim/geometry.hpp"

namespace ocskill::sim {

enum class SocketVariant { VGA, RJ45, Emodel, USBA };
inline constexpr std::array<SocketVariant, 4> kAllVariants = {SocketVariant::VGA, SocketVariant::RJ45,
                                                              SocketVariant::Emodel, SocketVariant::USBA};
std::string to_string(SocketVariant v);
SocketVariant parse_variant(const std::string& name);

enum class ObjectKind { socket, obstacle };
enum class ShapeKind { rect, disc };

using Color = std::array<std::uint8_t, 3>;

struct ObjectSpec {
  ObjectKind kind = ObjectKind::obstacle;
  Vec2 center;
  ShapeKind shape = ShapeKind::rect;
  Vec2 size;  // full extents; a disc uses size.x as its diameter
  Color color{};
  SocketVariant socket_variant = SocketVariant::VGA;
  double hole_tolerance = 0.0;
  double hole_offset = 0.0;  // hole axis x relative to the mount center
  double hole_depth = 0.0;
  int catalog_id = -1;  // identity for re-identification ground truth

  Box bounds() const { return {center, shape == ShapeKind::disc ? Vec2{size.x, size.x} : size}; }
  double top() const { return bounds().top(); }
  double hole_x() const { return center.x + hole_offset; }
  bool operator==(const ObjectSpec&) const = default;
};

/// Appearance and insertion geometry of one socket mount.
struct VariantProfile {
  SocketVariant variant;
  Color color;
  Vec2 size;
  double hole_offset;
  double hole_tolerance;
};
const VariantProfile& variant_profile(SocketVariant v);

struct ObstacleTemplate {
  ShapeKind shape;
  Vec2 size;
  Color color;
};
const std::vector<ObstacleTemplate>& obstacle_catalog();

/// u = a[0] x + a[1] y + a[2], v = a[3] x + a[4] y + a[5], in pixel units
/// where pixel (row i, col j) spans [j, j+1) x [i, i+1).
struct CameraModel {
  int image_size = 128;
  std::array<double, 6> affine{128.0, 0.0, 0.0, 0.0, -128.0, 128.0};
  Vec2 calibration_noise;

  Vec2 world_to_pixel(Vec2 p) const;
  /// Exact inverse of world_to_pixel; no calibration noise.
  Vec2 pixel_to_world_exact(Vec2 uv) const;
  double determinant() const { return affine[0] * affine[4] - affine[1] * affine[3]; }
  bool operator==(const CameraModel&) const = default;
};

struct WorldConfig {
  double workspace = 1.0;
  double v_max = 0.05;
  double dt = 0.1;
  double ee_radius = 0.012;
  double contact_stiffness = 200.0;  // N/m of proposed penetration
  double wrench_scale = 1.0;         // N mapped to 1.0 in observations
  double hole_depth = 0.02;
  int external_size = 128;
  int wrist_size = 64;
  double wrist_fov = 0.24;
  double calibration_noise_max = 0.01;
  double object_gap = 0.03;
  double edge_margin = 0.03;
  double approach_clearance = 0.12;
  double approach_side_margin = 0.03;
  double ee_clearance = 0.02;
  // Skill start pose: on the hole axis, tip this far above the mount face.
  double rl_start_height = 0.05;
  double limited_lateral = 0.02;
  double limited_height_low = -0.03;
  double limited_height_high = 0.01;
  int max_rejection_samples = 1000;

  bool operator==(const WorldConfig&) const = default;
};

WorldConfig load_world_config(const std::string& path);
void save_world_config(const WorldConfig& config, const std::string& path);

struct WorldState {
  Vec2 ee_pos;
  Vec2 ee_vel;
  double insertion_depth = 0.0;
  std::optional<ObjectSpec> socket;
  std::vector<ObjectSpec> obstacles;
  Vec2 contact_wrench;
  bool obstacle_contact = false;
  std::int64_t time_step = 0;
  CameraModel camera;

  const ObjectSpec& target() const;
  bool operator==(const WorldState&) const = default;
};

WorldState reset_scene(const WorldConfig& config, std::uint64_t seed, SocketVariant task, int n_obstacles);

Vec2 clamp_action(const WorldConfig& config, Vec2 action);
/// Uniformly rescales `v` so neither component exceeds `limit`.
Vec2 limit_velocity(Vec2 v, double limit);

WorldState step(const WorldConfig& config, const WorldState& state, Vec2 action, double dt);

/// End-effector pose at full insertion on the hole axis.
Vec2 goal_pose(const WorldConfig& config, const ObjectSpec& socket);
double required_depth(const ObjectSpec& socket);
Vec2 rl_start_pose(const WorldConfig& config, const ObjectSpec& socket);
bool in_goal(const WorldConfig& config, const WorldState& state);

/// Signed distance from p to the object's boundary (negative inside).
double signed_distance(const ObjectSpec& obj, Vec2 p);
/// Smallest clearance between the end-effector disc and any object.
double ee_clearance(const WorldConfig& config, const WorldState& state);

/// Points sampled along obstacle boundaries (socket excluded) every
/// `spacing` meters, each jittered by isotropic Gaussian noise.
std::vector<Vec2> sense_obstacle_points(const WorldState& state, double noise_std, std::uint64_t seed,
                                        double spacing = 0.0025);

}  // namespace ocskill::sim
