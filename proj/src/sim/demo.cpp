#include "ocskill/sim/demo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <queue>
#include <random>

#include "ocskill/errors.hpp"

namespace ocskill::sim {

WorldState reset_limited(const WorldConfig& config, std::uint64_t seed, SocketVariant task, int n_obstacles) {
  WorldState s = reset_scene(config, seed, task, n_obstacles);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const Vec2 start = rl_start_pose(config, s.target());
  s.ee_pos = start + Vec2{uni(-config.limited_lateral, config.limited_lateral),
                          uni(config.limited_height_low, config.limited_height_high)};
  return s;
}

Vec2 expert_action(const WorldConfig& config, const WorldState& state) {
  const auto& s = state.target();
  const Vec2 p = state.ee_pos;
  const double face_y = s.top() + config.ee_radius;
  const double hx = s.hole_x();
  Vec2 target;
  if (state.insertion_depth > 0.0 || std::abs(hx - p.x) <= 0.25 * s.hole_tolerance) {
    target = {hx, goal_pose(config, s).y - 0.01};
  } else {
    target = {hx, std::max(p.y, face_y + 0.008)};
  }
  return limit_velocity((target - p) * (1.0 / config.dt), config.v_max);
}

namespace {

struct GridIndex {
  int n;
  double res;
  int of(Vec2 p) const {
    const int i = std::clamp(static_cast<int>(p.x / res), 0, n - 1);
    const int j = std::clamp(static_cast<int>(p.y / res), 0, n - 1);
    return j * n + i;
  }
  Vec2 center(int id) const { return {(id % n + 0.5) * res, (id / n + 0.5) * res}; }
};

double scene_clearance(const WorldState& s, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : s.obstacles) best = std::min(best, signed_distance(o, p));
  if (s.socket) best = std::min(best, signed_distance(*s.socket, p));
  return best;
}

bool segment_clear(const WorldState& s, Vec2 a, Vec2 b, double clearance) {
  const int n = std::max(1, static_cast<int>(std::ceil(distance(a, b) / 0.002)));
  for (int i = 0; i <= n; ++i) {
    if (scene_clearance(s, a + (b - a) * (static_cast<double>(i) / n)) < clearance) return false;
  }
  return true;
}

}  // namespace

std::vector<Vec2> oracle_route(const WorldConfig& config, const WorldState& state, Vec2 goal) {
  const double res = 0.01;
  const GridIndex g{static_cast<int>(std::round(config.workspace / res)), res};
  const double inflate = config.ee_radius + 0.008;
  const int cells = g.n * g.n;
  std::vector<char> free(static_cast<std::size_t>(cells));
  for (int id = 0; id < cells; ++id) {
    const Vec2 c = g.center(id);
    free[static_cast<std::size_t>(id)] = scene_clearance(state, c) >= inflate && c.x > config.ee_radius &&
                                         c.y > config.ee_radius && c.x < config.workspace - config.ee_radius &&
                                         c.y < config.workspace - config.ee_radius;
  }
  const int s0 = g.of(state.ee_pos), s1 = g.of(goal);
  free[static_cast<std::size_t>(s0)] = free[static_cast<std::size_t>(s1)] = 1;

  std::vector<double> cost(static_cast<std::size_t>(cells), std::numeric_limits<double>::infinity());
  std::vector<int> parent(static_cast<std::size_t>(cells), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  auto h = [&](int id) { return distance(g.center(id), g.center(s1)); };
  cost[static_cast<std::size_t>(s0)] = 0.0;
  open.push({h(s0), s0});
  while (!open.empty()) {
    const auto [f, id] = open.top();
    open.pop();
    if (id == s1) break;
    if (f > cost[static_cast<std::size_t>(id)] + h(id) + 1e-12) continue;
    const int x = id % g.n, y = id / g.n;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (!dx && !dy) continue;
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= g.n || ny >= g.n) continue;
        const int nid = ny * g.n + nx;
        if (!free[static_cast<std::size_t>(nid)]) continue;
        const double c = cost[static_cast<std::size_t>(id)] + res * std::hypot(dx, dy);
        if (c < cost[static_cast<std::size_t>(nid)]) {
          cost[static_cast<std::size_t>(nid)] = c;
          parent[static_cast<std::size_t>(nid)] = id;
          open.push({c + h(nid), nid});
        }
      }
  }
  if (s0 != s1 && parent[static_cast<std::size_t>(s1)] < 0) return {};

  std::vector<Vec2> raw{goal};
  for (int id = parent[static_cast<std::size_t>(s1)]; id >= 0 && id != s0; id = parent[static_cast<std::size_t>(id)]) {
    raw.push_back(g.center(id));
  }
  raw.push_back(state.ee_pos);
  std::reverse(raw.begin(), raw.end());

  // Greedy line-of-sight shortcutting.
  const double clear = config.ee_radius + 0.002;
  std::vector<Vec2> out{raw.front()};
  std::size_t i = 0;
  while (i + 1 < raw.size()) {
    std::size_t j = raw.size() - 1;
    while (j > i + 1 && !segment_clear(state, raw[i], raw[j], clear)) --j;
    out.push_back(raw[j]);
    i = j;
  }
  return out;
}

Frame observe(const WorldConfig& config, const WorldState& state, bool external, bool wrist) {
  Frame f;
  if (external) f.external = render_external(config, state);
  if (wrist) f.wrist = render_wrist(config, state);
  f.ee_pos = state.ee_pos;
  f.ee_vel = state.ee_vel;
  f.wrench = state.contact_wrench;
  return f;
}

Demonstration oracle_demo(const WorldConfig& config, std::uint64_t seed, SocketVariant task, DemoScope scope,
                          int n_obstacles) {
  Demonstration demo;
  demo.task = task;
  demo.seed = seed;
  const bool goal = scope == DemoScope::full_workspace;
  demo.kind = goal ? DemoKind::goal_demo : DemoKind::skill_demo;
  WorldState s = goal ? reset_scene(config, seed, task, n_obstacles) : reset_limited(config, seed, task, n_obstacles);
  demo.reference = rl_start_pose(config, s.target());

  std::vector<Vec2> route;
  std::size_t next = 1;
  if (goal) {
    route = oracle_route(config, s, demo.reference);
    if (route.empty()) {
      demo.frames.push_back(observe(config, s, true, false));
      return demo;
    }
  }

  const int max_steps = goal ? 800 : 200;
  for (int t = 0; t < max_steps; ++t) {
    Frame f = observe(config, s, goal, !goal);
    if (in_goal(config, s)) {
      demo.frames.push_back(std::move(f));
      demo.success = true;
      return demo;
    }
    while (next < route.size() && distance(s.ee_pos, route[next]) < 1e-4) ++next;
    Vec2 a = next < route.size() ? limit_velocity((route[next] - s.ee_pos) * (1.0 / config.dt), config.v_max)
                                 : expert_action(config, s);
    f.action = a;
    demo.frames.push_back(std::move(f));
    s = step(config, s, a, config.dt);
  }
  demo.frames.push_back(observe(config, s, goal, !goal));
  demo.success = in_goal(config, s);
  return demo;
}

namespace {

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated demo record");
  return v;
}

void put_image(std::ostream& out, const Image& img) {
  put<std::uint16_t>(out, static_cast<std::uint16_t>(img.height));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(img.width));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(img.channels));
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

Image get_image(std::istream& in) {
  const int h = get<std::uint16_t>(in), w = get<std::uint16_t>(in), c = get<std::uint8_t>(in);
  if (h == 0 || w == 0 || c == 0 || c > 4) throw IoError("corrupt image header in demo record");
  Image img(h, w, c);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw IoError("truncated image in demo record");
  return img;
}

constexpr char kMagic[5] = {'D', 'E', 'M', 'O', '1'};

}  // namespace

void write_demos(std::ostream& out, const std::vector<Demonstration>& demos) {
  static_assert(std::endian::native == std::endian::little, "DEMO1 records are little-endian");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(demos.size()));
  for (const auto& d : demos) {
    put<std::uint8_t>(out, static_cast<std::uint8_t>(d.kind));
    put<std::uint8_t>(out, d.success ? 1 : 0);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(d.task));
    put<std::uint64_t>(out, d.seed);
    put<double>(out, d.reference.x);
    put<double>(out, d.reference.y);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(d.frames.size()));
    for (const auto& f : d.frames) {
      put<std::uint8_t>(out, static_cast<std::uint8_t>((f.external ? 1 : 0) | (f.wrist ? 2 : 0)));
      for (Vec2 v : {f.ee_pos, f.ee_vel, f.wrench, f.action}) {
        put<double>(out, v.x);
        put<double>(out, v.y);
      }
      if (f.external) put_image(out, *f.external);
      if (f.wrist) put_image(out, *f.wrist);
    }
  }
  if (!out) throw IoError("failed writing demo records");
}

std::vector<Demonstration> read_demos(std::istream& in) {
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("not a DEMO1 record file");
  const auto n = get<std::uint32_t>(in);
  std::vector<Demonstration> demos;
  for (std::uint32_t i = 0; i < n; ++i) {
    Demonstration d;
    const auto kind = get<std::uint8_t>(in);
    if (kind > 1) throw IoError("corrupt demo kind");
    d.kind = static_cast<DemoKind>(kind);
    d.success = get<std::uint8_t>(in) != 0;
    const auto task = get<std::uint8_t>(in);
    if (task >= kAllVariants.size()) throw IoError("corrupt demo task");
    d.task = static_cast<SocketVariant>(task);
    d.seed = get<std::uint64_t>(in);
    d.reference.x = get<double>(in);
    d.reference.y = get<double>(in);
    const auto frames = get<std::uint32_t>(in);
    for (std::uint32_t k = 0; k < frames; ++k) {
      Frame f;
      const auto flags = get<std::uint8_t>(in);
      for (Vec2* v : {&f.ee_pos, &f.ee_vel, &f.wrench, &f.action}) {
        v->x = get<double>(in);
        v->y = get<double>(in);
      }
      if (flags & 1) f.external = get_image(in);
      if (flags & 2) f.wrist = get_image(in);
      d.frames.push_back(std::move(f));
    }
    demos.push_back(std::move(d));
  }
  return demos;
}

void save_demos(const std::string& path, const std::vector<Demonstration>& demos) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_demos(out, demos);
}

std::vector<Demonstration> load_demos(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("demo file not found: " + path);
  return read_demos(in);
}

}  // namespace ocskill::sim
