#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "ocskill/nn/tensor.hpp"
#include "ocskill/sim/demo.hpp"
#include "ocskill/sim/render.hpp"

namespace ocskill::rl {

inline constexpr int kProprioDim = 4;
inline constexpr int kActionDim = 2;

/// Image channels: wrist gray, optionally followed by the downsampled external RGB view.
enum class ObsKind { wrist, wrist_and_external };

struct Observation {
  sim::Image image;
  std::array<float, kProprioDim> proprio{};  // ee_vel / v_max, wrench / wrench_scale
};

int obs_channels(ObsKind kind);
Observation make_observation(const sim::WorldConfig& config, const sim::WorldState& state, ObsKind kind);
/// Builds an observation from a recorded frame; the frame must carry the images `kind` needs.
Observation frame_observation(const sim::WorldConfig& config, const sim::Frame& frame, ObsKind kind);

/// Images to [N, H, W, C] in [0, 1] and proprio to [N, 4].
nn::Tensor image_batch(const std::vector<const Observation*>& obs);
nn::Tensor proprio_batch(const std::vector<const Observation*>& obs);

struct GoalRegion {
  sim::Vec2 pose;
  double tolerance = 0.01;
  double required_depth = 0.0;
};

GoalRegion goal_region(const sim::WorldConfig& config, const sim::ObjectSpec& socket);
double sparse_reward(const sim::WorldState& state, const GoalRegion& goal);
/// 1[goal] - 0.005 * 1[obstacle contact].
double collision_penalty_reward(const sim::WorldState& state, const GoalRegion& goal);

struct AugmentConfig {
  int pad = 4;
  float brightness_lo = 0.8f;
  float brightness_hi = 1.2f;
};

/// Zero-pad, crop back at (dy, dx) in [0, 2 pad], scale by `brightness`, clamp to [0, 1]. Images are NHWC.
void augment_image(nn::Tensor& images, int index, int dy, int dx, float brightness, int pad);
/// Independent random shift and brightness per batch row.
void augment_batch(nn::Tensor& images, const AugmentConfig& config, std::mt19937_64& rng);

/// Normalized action in [-1, 1]^2 to a velocity command and back.
sim::Vec2 to_velocity(const sim::WorldConfig& config, std::array<float, 2> a);
std::array<float, 2> from_velocity(const sim::WorldConfig& config, sim::Vec2 v);

class SkillPolicy {
 public:
  virtual ~SkillPolicy() = default;
  virtual void reset(const sim::WorldConfig& config, const sim::WorldState& state) = 0;
  virtual sim::Vec2 act(const sim::WorldConfig& config, const sim::WorldState& state) = 0;
  /// Policies that give up early report it here.
  virtual bool failed() const { return false; }
};

struct Rollout {
  sim::WorldState state;
  bool success = false;
  bool gave_up = false;
  int steps = 0;
  int contact_steps = 0;
  std::vector<sim::Vec2> trajectory;
};

/// Runs the policy until the goal region is reached, the policy gives up, or the horizon ends.
Rollout run_skill(const sim::WorldConfig& config, const sim::WorldState& start, SkillPolicy& policy, int horizon);

}  // namespace ocskill::rl
