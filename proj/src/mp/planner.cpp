#include "ocskill/mp/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "ocskill/errors.hpp"
#include "ocskill/mp/identify.hpp"

namespace ocskill::mp {

using sim::Vec2;

std::array<int, 2> OccupancyGrid::cell_of(Vec2 p) const {
  return {static_cast<int>(std::floor((p.x - origin.x) / resolution)),
          static_cast<int>(std::floor((p.y - origin.y) / resolution))};
}

Vec2 OccupancyGrid::cell_center(int ix, int iy) const {
  return {origin.x + (ix + 0.5) * resolution, origin.y + (iy + 0.5) * resolution};
}

bool OccupancyGrid::blocked(Vec2 p) const {
  const auto [ix, iy] = cell_of(p);
  return !in_bounds(ix, iy) || inflated_at(ix, iy);
}

OccupancyGrid empty_grid(double resolution, Vec2 origin, Vec2 extent, double inflation) {
  if (!(resolution > 0.0)) throw ConfigError("grid resolution must be positive");
  OccupancyGrid g;
  g.resolution = resolution;
  g.origin = origin;
  g.inflation = inflation;
  g.nx = static_cast<int>(std::ceil(extent.x / resolution - 1e-9));
  g.ny = static_cast<int>(std::ceil(extent.y / resolution - 1e-9));
  g.raw.assign(static_cast<std::size_t>(g.nx) * g.ny, 0);
  g.inflated = g.raw;
  return g;
}

void add_points(OccupancyGrid& grid, const std::vector<Vec2>& points, double inflation) {
  const int k = std::max(0, static_cast<int>(std::ceil(inflation / grid.resolution - 1e-9)));
  std::vector<std::array<int, 2>> disc;
  for (int dy = -k; dy <= k; ++dy)
    for (int dx = -k; dx <= k; ++dx)
      if (dx * dx + dy * dy <= k * k) disc.push_back({dx, dy});
  for (const Vec2& p : points) {
    const auto [ix, iy] = grid.cell_of(p);
    if (!grid.in_bounds(ix, iy)) continue;
    auto& cell = grid.raw[static_cast<std::size_t>(iy) * grid.nx + ix];
    if (cell) continue;
    cell = 1;
    for (const auto& [dx, dy] : disc) {
      if (grid.in_bounds(ix + dx, iy + dy)) grid.inflated[static_cast<std::size_t>(iy + dy) * grid.nx + ix + dx] = 1;
    }
  }
}

OccupancyGrid build_occupancy(const std::vector<Vec2>& points, double resolution, double inflation, Vec2 origin,
                              Vec2 extent) {
  auto g = empty_grid(resolution, origin, extent, inflation);
  add_points(g, points, inflation);
  return g;
}

bool segment_free(const OccupancyGrid& grid, Vec2 a, Vec2 b) {
  // Walks every cell the segment touches, which is at least as strict as sampling at any spacing.
  if (grid.blocked(a) || grid.blocked(b)) return false;
  auto [ix, iy] = grid.cell_of(a);
  const auto [ex, ey] = grid.cell_of(b);
  const Vec2 d = b - a;
  const int sx = d.x > 0 ? 1 : -1, sy = d.y > 0 ? 1 : -1;
  const double inf = std::numeric_limits<double>::infinity();
  auto first_crossing = [&](double p, double o, double dp, int cell, int s) {
    if (dp == 0.0) return inf;
    const double edge = o + (cell + (s > 0 ? 1 : 0)) * grid.resolution;
    return (edge - p) / dp;
  };
  double tx = first_crossing(a.x, grid.origin.x, d.x, ix, sx);
  double ty = first_crossing(a.y, grid.origin.y, d.y, iy, sy);
  const double dtx = d.x != 0.0 ? grid.resolution / std::abs(d.x) : inf;
  const double dty = d.y != 0.0 ? grid.resolution / std::abs(d.y) : inf;
  auto occupied = [&](int x, int y) { return !grid.in_bounds(x, y) || grid.inflated_at(x, y); };
  const int max_steps = std::abs(ex - ix) + std::abs(ey - iy) + 2;
  for (int k = 0; k < max_steps && (ix != ex || iy != ey); ++k) {
    if (std::abs(tx - ty) < 1e-12) {
      if (tx > 1.0) break;
      // Passing through a corner: both side cells count as touched.
      if (occupied(ix + sx, iy) || occupied(ix, iy + sy)) return false;
      ix += sx, iy += sy;
      tx += dtx, ty += dty;
    } else if (tx < ty) {
      if (tx > 1.0) break;
      ix += sx, tx += dtx;
    } else {
      if (ty > 1.0) break;
      iy += sy, ty += dty;
    }
    if (occupied(ix, iy)) return false;
  }
  return true;
}

namespace {

struct Tree {
  std::vector<Vec2> nodes;
  std::vector<int> parent;

  int nearest(Vec2 q) const {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const Vec2 d = nodes[i] - q;
      const double dd = d.dot(d);
      if (dd < bd) bd = dd, best = static_cast<int>(i);
    }
    return best;
  }
  std::vector<Vec2> path_to_root(int i) const {
    std::vector<Vec2> out;
    for (; i >= 0; i = parent[static_cast<std::size_t>(i)]) out.push_back(nodes[static_cast<std::size_t>(i)]);
    return out;
  }
};

enum class Extend { trapped, advanced, reached };

Extend extend(Tree& t, Vec2 q, const OccupancyGrid& grid, double step) {
  const int near = t.nearest(q);
  const Vec2 from = t.nodes[static_cast<std::size_t>(near)];
  const double d = sim::distance(from, q);
  const bool reach = d <= step;
  const Vec2 to = reach ? q : from + (q - from) * (step / d);
  if (!segment_free(grid, from, to)) return Extend::trapped;
  t.nodes.push_back(to);
  t.parent.push_back(near);
  return reach ? Extend::reached : Extend::advanced;
}

Extend connect(Tree& t, Vec2 q, const OccupancyGrid& grid, double step) {
  Extend s = Extend::advanced;
  while (s == Extend::advanced) s = extend(t, q, grid, step);
  return s;
}

}  // namespace

MotionPlan plan_rrt_connect(Vec2 start, Vec2 goal, const OccupancyGrid& grid, std::uint64_t seed,
                            const RrtConfig& config) {
  if (grid.blocked(goal)) throw PlanningError("goal lies inside inflated occupancy");
  if (grid.blocked(start)) throw PlanningError("start lies inside inflated occupancy");
  MotionPlan plan;
  plan.start = start;
  plan.goal = goal;
  if (sim::distance(start, goal) <= config.goal_tolerance) {
    plan.success = true;
    plan.waypoints = {start};
    plan.start_tree_size = plan.goal_tree_size = 1;
    return plan;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(grid.origin.x, grid.origin.x + grid.nx * grid.resolution);
  std::uniform_real_distribution<double> uy(grid.origin.y, grid.origin.y + grid.ny * grid.resolution);
  Tree ts{{start}, {-1}}, tg{{goal}, {-1}};
  Tree* a = &ts;
  Tree* b = &tg;
  std::vector<Vec2> path;
  for (int it = 0; it < config.max_iterations && path.empty(); ++it) {
    plan.iterations = it + 1;
    const Vec2 q{ux(rng), uy(rng)};
    if (extend(*a, q, grid, config.step) != Extend::trapped) {
      const Vec2 qnew = a->nodes.back();
      if (connect(*b, qnew, grid, config.step) == Extend::reached) {
        auto pa = a->path_to_root(static_cast<int>(a->nodes.size()) - 1);
        auto pb = b->path_to_root(static_cast<int>(b->nodes.size()) - 1);
        std::reverse(pa.begin(), pa.end());
        pa.insert(pa.end(), pb.begin() + 1, pb.end());
        if (a == &tg) std::reverse(pa.begin(), pa.end());
        path = std::move(pa);
      }
    }
    std::swap(a, b);
  }
  plan.start_tree_size = static_cast<int>(ts.nodes.size());
  plan.goal_tree_size = static_cast<int>(tg.nodes.size());
  if (path.empty()) return plan;

  for (int k = 0; k < config.shortcut_attempts && path.size() > 2; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, path.size() - 1);
    std::size_t i = pick(rng), j = pick(rng);
    if (i > j) std::swap(i, j);
    if (j < i + 2) continue;
    if (segment_free(grid, path[i], path[j])) {
      path.erase(path.begin() + static_cast<std::ptrdiff_t>(i) + 1, path.begin() + static_cast<std::ptrdiff_t>(j));
    }
  }
  std::vector<Vec2> smooth{path.front()};
  for (std::size_t i = 0; i + 1 < path.size();) {
    std::size_t j = path.size() - 1;
    while (j > i + 1 && !segment_free(grid, path[i], path[j])) --j;
    smooth.push_back(path[j]);
    i = j;
  }
  plan.success = true;
  plan.waypoints = std::move(smooth);
  return plan;
}

ExecutionResult execute_plan(const MotionPlan& plan, const sim::WorldConfig& config, const sim::WorldState& state) {
  if (plan.waypoints.empty()) throw UsageError("execute_plan: plan has no waypoints");
  ExecutionResult res;
  res.state = state;
  res.trajectory.push_back(state.ee_pos);
  const double step_len = config.v_max * config.dt;
  for (const Vec2& wp : plan.waypoints) {
    const int cap = static_cast<int>(std::ceil(sim::distance(res.state.ee_pos, wp) / step_len * std::sqrt(2.0))) + 5;
    for (int k = 0; k < cap && sim::distance(res.state.ee_pos, wp) > 1e-9; ++k) {
      const Vec2 v = sim::limit_velocity((wp - res.state.ee_pos) * (1.0 / config.dt), config.v_max);
      res.state = sim::step(config, res.state, v, config.dt);
      ++res.steps;
      res.trajectory.push_back(res.state.ee_pos);
      if (res.state.obstacle_contact || res.state.contact_wrench.norm() > 0.0) {
        throw ExecutionFault("contact at (" + std::to_string(res.state.ee_pos.x) + ", " +
                             std::to_string(res.state.ee_pos.y) + ") during plan execution, step " +
                             std::to_string(res.steps));
      }
    }
  }
  return res;
}

Vec2 standoff_pose(Vec2 o_target, double standoff) { return {o_target.x, o_target.y + standoff}; }

OccupancyGrid scene_occupancy(const sim::WorldConfig& config, const sim::WorldState& state,
                              const ocgm::SceneDecomposition& decomposition, int target_slot, const MpConfig& mp,
                              std::uint64_t seed) {
  const double inflation = config.ee_radius + mp.safety_margin;
  auto grid = empty_grid(mp.resolution, {0.0, 0.0}, {config.workspace, config.workspace}, inflation);
  add_points(grid, sim::sense_obstacle_points(state, mp.sense_noise, seed), inflation);
  if (target_slot >= 0) {
    const auto& mask = decomposition.masks.at(static_cast<std::size_t>(target_slot));
    std::vector<Vec2> pts;
    for (int i = 0; i < decomposition.height; ++i)
      for (int j = 0; j < decomposition.width; ++j)
        if (mask[static_cast<std::size_t>(i) * decomposition.width + j]) pts.push_back(pixel_to_world({j + 0.5, i + 0.5}, state.camera));
    add_points(grid, pts, inflation + mp.target_margin);
  }
  return grid;
}

void write_plan_csv(const MotionPlan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "index,x,y\n";
  out.precision(9);
  for (std::size_t i = 0; i < plan.waypoints.size(); ++i) {
    out << i << "," << plan.waypoints[i].x << "," << plan.waypoints[i].y << "\n";
  }
}

void write_grid_pgm(const OccupancyGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << grid.nx << " " << grid.ny << "\n255\n";
  for (int iy = grid.ny - 1; iy >= 0; --iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      const char v = static_cast<char>(grid.raw_at(ix, iy) ? 0 : grid.inflated_at(ix, iy) ? 128 : 255);
      out.put(v);
    }
}

}  // namespace ocskill::mp
