#include "ocskill/rl/env.hpp"

#include <algorithm>
#include <cmath>

#include "ocskill/errors.hpp"

namespace ocskill::rl {

using sim::Vec2;

int obs_channels(ObsKind kind) { return kind == ObsKind::wrist ? 1 : 4; }

namespace {

Observation assemble(const sim::WorldConfig& config, const sim::Image& wrist, const sim::Image* external, Vec2 vel,
                     Vec2 wrench) {
  Observation o;
  if (!external) {
    o.image = wrist;
  } else {
    const sim::Image ext = sim::downsample(*external, external->height / wrist.height);
    if (ext.height != wrist.height || ext.width != wrist.width) throw ConfigError("external view does not downsample to wrist size");
    o.image = sim::Image(wrist.height, wrist.width, 4);
    for (int i = 0; i < wrist.height; ++i)
      for (int j = 0; j < wrist.width; ++j) {
        o.image.at(i, j, 0) = wrist.at(i, j);
        for (int c = 0; c < 3; ++c) o.image.at(i, j, c + 1) = ext.at(i, j, c);
      }
  }
  o.proprio = {static_cast<float>(vel.x / config.v_max), static_cast<float>(vel.y / config.v_max),
               static_cast<float>(wrench.x / config.wrench_scale), static_cast<float>(wrench.y / config.wrench_scale)};
  return o;
}

}  // namespace

Observation make_observation(const sim::WorldConfig& config, const sim::WorldState& state, ObsKind kind) {
  const sim::Image wrist = sim::render_wrist(config, state);
  if (kind == ObsKind::wrist) return assemble(config, wrist, nullptr, state.ee_vel, state.contact_wrench);
  const sim::Image ext = sim::render_external(config, state);
  return assemble(config, wrist, &ext, state.ee_vel, state.contact_wrench);
}

Observation frame_observation(const sim::WorldConfig& config, const sim::Frame& frame, ObsKind kind) {
  if (!frame.wrist) throw ConfigError("frame has no wrist image");
  if (kind == ObsKind::wrist_and_external && !frame.external) throw ConfigError("frame has no external image");
  return assemble(config, *frame.wrist, kind == ObsKind::wrist ? nullptr : &*frame.external, frame.ee_vel,
                  frame.wrench);
}

nn::Tensor image_batch(const std::vector<const Observation*>& obs) {
  if (obs.empty()) throw UsageError("image_batch: empty batch");
  const auto& f = obs[0]->image;
  nn::Tensor t({static_cast<int>(obs.size()), f.height, f.width, f.channels});
  float* out = t.data();
  for (const auto* o : obs) {
    if (o->image.pixels.size() != f.pixels.size()) throw UsageError("image_batch: mixed image shapes");
    for (auto v : o->image.pixels) *out++ = v * (1.0f / 255.0f);
  }
  return t;
}

nn::Tensor proprio_batch(const std::vector<const Observation*>& obs) {
  nn::Tensor t({static_cast<int>(obs.size()), kProprioDim});
  for (std::size_t i = 0; i < obs.size(); ++i)
    for (int k = 0; k < kProprioDim; ++k) t.at(static_cast<int>(i), k) = obs[i]->proprio[static_cast<std::size_t>(k)];
  return t;
}

GoalRegion goal_region(const sim::WorldConfig& config, const sim::ObjectSpec& socket) {
  return {sim::goal_pose(config, socket), socket.hole_tolerance, sim::required_depth(socket)};
}

double sparse_reward(const sim::WorldState& state, const GoalRegion& goal) {
  return sim::distance(state.ee_pos, goal.pose) <= goal.tolerance && state.insertion_depth >= goal.required_depth ? 1.0
                                                                                                                 : 0.0;
}

double collision_penalty_reward(const sim::WorldState& state, const GoalRegion& goal) {
  return sparse_reward(state, goal) - 0.005 * (state.obstacle_contact ? 1.0 : 0.0);
}

void augment_image(nn::Tensor& images, int index, int dy, int dx, float brightness, int pad) {
  const int h = images.dim(1), w = images.dim(2), c = images.dim(3);
  float* img = images.data() + static_cast<std::size_t>(index) * h * w * c;
  std::vector<float> src(img, img + static_cast<std::size_t>(h) * w * c);
  for (int i = 0; i < h; ++i) {
    const int si = i + dy - pad;
    for (int j = 0; j < w; ++j) {
      const int sj = j + dx - pad;
      const bool inside = si >= 0 && sj >= 0 && si < h && sj < w;
      for (int k = 0; k < c; ++k) {
        const float v = inside ? src[(static_cast<std::size_t>(si) * w + sj) * c + k] : 0.0f;
        img[(static_cast<std::size_t>(i) * w + j) * c + k] = std::clamp(v * brightness, 0.0f, 1.0f);
      }
    }
  }
}

void augment_batch(nn::Tensor& images, const AugmentConfig& config, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> shift(0, 2 * config.pad);
  std::uniform_real_distribution<float> bright(config.brightness_lo, config.brightness_hi);
  for (int n = 0; n < images.dim(0); ++n) {
    const int dy = shift(rng), dx = shift(rng);
    augment_image(images, n, dy, dx, bright(rng), config.pad);
  }
}

Vec2 to_velocity(const sim::WorldConfig& config, std::array<float, 2> a) {
  return {std::clamp(static_cast<double>(a[0]), -1.0, 1.0) * config.v_max,
          std::clamp(static_cast<double>(a[1]), -1.0, 1.0) * config.v_max};
}

std::array<float, 2> from_velocity(const sim::WorldConfig& config, Vec2 v) {
  return {static_cast<float>(std::clamp(v.x / config.v_max, -1.0, 1.0)),
          static_cast<float>(std::clamp(v.y / config.v_max, -1.0, 1.0))};
}

Rollout run_skill(const sim::WorldConfig& config, const sim::WorldState& start, SkillPolicy& policy, int horizon) {
  Rollout r;
  r.state = start;
  r.trajectory.push_back(start.ee_pos);
  policy.reset(config, start);
  const GoalRegion goal = goal_region(config, start.target());
  r.success = sparse_reward(r.state, goal) > 0.0;
  while (!r.success && r.steps < horizon) {
    const Vec2 a = policy.act(config, r.state);
    if (policy.failed()) {
      r.gave_up = true;
      break;
    }
    r.state = sim::step(config, r.state, a, config.dt);
    ++r.steps;
    if (r.state.obstacle_contact) ++r.contact_steps;
    r.trajectory.push_back(r.state.ee_pos);
    r.success = sparse_reward(r.state, goal) > 0.0;
  }
  return r;
}

}  // namespace ocskill::rl
