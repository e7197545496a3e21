#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ocskill/ocgm/ocgm.hpp"
#include "ocskill/sim/world.hpp"

namespace ocskill::mp {

struct OccupancyGrid {
  double resolution = 0.005;
  sim::Vec2 origin;
  int nx = 0;
  int ny = 0;
  double inflation = 0.0;
  std::vector<std::uint8_t> raw;       // sensed cells
  std::vector<std::uint8_t> inflated;  // raw cells dilated by the inflation radius

  bool in_bounds(int ix, int iy) const { return ix >= 0 && iy >= 0 && ix < nx && iy < ny; }
  /// Cell containing p, possibly out of bounds.
  std::array<int, 2> cell_of(sim::Vec2 p) const;
  sim::Vec2 cell_center(int ix, int iy) const;
  bool raw_at(int ix, int iy) const { return raw[static_cast<std::size_t>(iy) * nx + ix] != 0; }
  bool inflated_at(int ix, int iy) const { return inflated[static_cast<std::size_t>(iy) * nx + ix] != 0; }
  /// Inflated occupancy at p; anything outside the grid is blocked.
  bool blocked(sim::Vec2 p) const;
};

OccupancyGrid empty_grid(double resolution, sim::Vec2 origin, sim::Vec2 extent, double inflation);
/// Marks the cell of every point and dilates it by ceil(inflation / resolution) cells.
void add_points(OccupancyGrid& grid, const std::vector<sim::Vec2>& points, double inflation);
OccupancyGrid build_occupancy(const std::vector<sim::Vec2>& points, double resolution, double inflation,
                              sim::Vec2 origin = {0.0, 0.0}, sim::Vec2 extent = {1.0, 1.0});

/// True when no cell touched by the segment is occupied after inflation.
bool segment_free(const OccupancyGrid& grid, sim::Vec2 a, sim::Vec2 b);

struct RrtConfig {
  double step = 0.02;
  int max_iterations = 20000;
  double goal_tolerance = 0.01;
  int shortcut_attempts = 200;
};

struct MotionPlan {
  bool success = false;
  std::vector<sim::Vec2> waypoints;
  sim::Vec2 start;
  sim::Vec2 goal;
  int iterations = 0;
  int start_tree_size = 0;
  int goal_tree_size = 0;
};

/// Throws PlanningError when start or goal lies in inflated occupancy. An exhausted
/// iteration budget returns a plan with success = false.
MotionPlan plan_rrt_connect(sim::Vec2 start, sim::Vec2 goal, const OccupancyGrid& grid, std::uint64_t seed,
                            const RrtConfig& config = {});

struct ExecutionResult {
  sim::WorldState state;
  std::vector<sim::Vec2> trajectory;
  int steps = 0;
};

/// Tracks the waypoints at up to v_max. Throws ExecutionFault on any contact.
ExecutionResult execute_plan(const MotionPlan& plan, const sim::WorldConfig& config, const sim::WorldState& state);

struct MpConfig {
  double resolution = 0.005;
  double safety_margin = 0.01;         // added to the end-effector radius for inflation
  double target_margin = 0.008;        // extra inflation around the camera-located target object
  double sense_noise = 0.001;
  double standoff = 0.06;
  RrtConfig rrt;
};

/// Hand-off pose above the target object.
sim::Vec2 standoff_pose(sim::Vec2 o_target, double standoff);

/// Sensed obstacle points plus the target object's mask pixels mapped through the camera.
OccupancyGrid scene_occupancy(const sim::WorldConfig& config, const sim::WorldState& state,
                              const ocgm::SceneDecomposition& decomposition, int target_slot, const MpConfig& mp,
                              std::uint64_t seed);

void write_plan_csv(const MotionPlan& plan, const std::string& path);
/// 8-bit PGM, row 0 at the top: free 255, inflated 128, raw 0.
void write_grid_pgm(const OccupancyGrid& grid, const std::string& path);

}  // namespace ocskill::mp
