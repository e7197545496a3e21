#pragma once

#include <vector>

#include "ocskill/ocgm/ocgm.hpp"
#include "ocskill/sim/demo.hpp"

namespace ocskill::mp {

inline constexpr double kPresenceGate = 0.5;

struct GoalSpec {
  std::vector<float> z_what_target;
  sim::Vec2 o_target;
  int slot = -1;
};

/// Inverse camera affine plus the camera's calibration offset. Throws DomainError outside the image.
sim::Vec2 pixel_to_world(sim::Vec2 uv, const sim::CameraModel& camera);

/// World position of a slot: its mask centroid mapped through pixel_to_world.
sim::Vec2 slot_position(const ocgm::SceneDecomposition& decomposition, int slot, const sim::CameraModel& camera);

/// Present slot whose position is nearest to `ee_final`.
GoalSpec identify_target(sim::Vec2 ee_final, const ocgm::SceneDecomposition& decomposition,
                         const sim::CameraModel& camera);
/// Uses the demonstration's final end-effector position; `decomposition` comes from its first external frame.
GoalSpec identify_target(const sim::Demonstration& goal_demo, const ocgm::SceneDecomposition& decomposition,
                         const sim::CameraModel& camera);

/// Present slot whose appearance code is nearest to `z_what_target`.
int reidentify(const std::vector<float>& z_what_target, const ocgm::SceneDecomposition& decomposition);

}  // namespace ocskill::mp
