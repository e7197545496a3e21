#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ocskill/sim/render.hpp"
#include "ocskill/sim/world.hpp"

namespace ocskill::sim {

enum class DemoKind : std::uint8_t { goal_demo = 0, skill_demo = 1 };
enum class DemoScope { full_workspace, limited_task_space };

struct Frame {
  std::optional<Image> external;
  std::optional<Image> wrist;
  Vec2 ee_pos;
  Vec2 ee_vel;
  Vec2 wrench;
  Vec2 action;  // command issued after this observation; zero on the last frame
  bool operator==(const Frame&) const = default;
};

struct Demonstration {
  DemoKind kind = DemoKind::skill_demo;
  std::vector<Frame> frames;
  bool success = false;
  SocketVariant task = SocketVariant::VGA;
  std::uint64_t seed = 0;
  Vec2 reference;  // skill start pose of the scene the demo was recorded in
  bool operator==(const Demonstration&) const = default;
};

/// Scene from reset_scene with the end-effector moved to a random pose of the
/// limited task space around the skill start pose.
WorldState reset_limited(const WorldConfig& config, std::uint64_t seed, SocketVariant task, int n_obstacles);

/// Scripted insertion expert: align over the hole axis, then descend.
Vec2 expert_action(const WorldConfig& config, const WorldState& state);

/// Collision-free waypoints for the end-effector over the true scene geometry
/// (grid A* followed by line-of-sight shortcutting). Empty if unreachable.
std::vector<Vec2> oracle_route(const WorldConfig& config, const WorldState& state, Vec2 goal);

Demonstration oracle_demo(const WorldConfig& config, std::uint64_t seed, SocketVariant task, DemoScope scope,
                          int n_obstacles = 1);

/// Observation frame for the current state; images rendered on request.
Frame observe(const WorldConfig& config, const WorldState& state, bool external, bool wrist);

void write_demos(std::ostream& out, const std::vector<Demonstration>& demos);
std::vector<Demonstration> read_demos(std::istream& in);
void save_demos(const std::string& path, const std::vector<Demonstration>& demos);
std::vector<Demonstration> load_demos(const std::string& path);

}  // namespace ocskill::sim
