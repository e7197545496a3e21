#include "ocskill/mp/identify.hpp"

#include <limits>

#include "ocskill/errors.hpp"

namespace ocskill::mp {

using sim::Vec2;

Vec2 pixel_to_world(Vec2 uv, const sim::CameraModel& camera) {
  const double n = camera.image_size;
  if (!(uv.x >= 0.0 && uv.y >= 0.0 && uv.x <= n && uv.y <= n)) {
    throw DomainError("pixel (" + std::to_string(uv.x) + ", " + std::to_string(uv.y) + ") outside the image");
  }
  return camera.pixel_to_world_exact(uv) + camera.calibration_noise;
}

Vec2 slot_position(const ocgm::SceneDecomposition& decomposition, int slot, const sim::CameraModel& camera) {
  return pixel_to_world(decomposition.slots.at(static_cast<std::size_t>(slot)).centroid, camera);
}

GoalSpec identify_target(Vec2 ee_final, const ocgm::SceneDecomposition& decomposition,
                         const sim::CameraModel& camera) {
  GoalSpec g;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < decomposition.slots.size(); ++j) {
    if (decomposition.slots[j].z_pre < kPresenceGate) continue;
    const Vec2 o = slot_position(decomposition, static_cast<int>(j), camera);
    const double d = sim::distance(o, ee_final);
    if (d < best) {
      best = d;
      g.slot = static_cast<int>(j);
      g.o_target = o;
    }
  }
  if (g.slot < 0) throw IdentificationError("no present object in the goal demonstration's first frame");
  g.z_what_target = decomposition.slots[static_cast<std::size_t>(g.slot)].z_what;
  return g;
}

GoalSpec identify_target(const sim::Demonstration& goal_demo, const ocgm::SceneDecomposition& decomposition,
                         const sim::CameraModel& camera) {
  if (goal_demo.frames.empty()) throw IdentificationError("goal demonstration has no frames");
  return identify_target(goal_demo.frames.back().ee_pos, decomposition, camera);
}

int reidentify(const std::vector<float>& z_what_target, const ocgm::SceneDecomposition& decomposition) {
  int best_slot = -1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < decomposition.slots.size(); ++j) {
    const auto& s = decomposition.slots[j];
    if (s.z_pre < kPresenceGate) continue;
    if (s.z_what.size() != z_what_target.size()) {
      throw IdentificationError("slot " + std::to_string(j) + " has no appearance code of matching size");
    }
    double d = 0.0;
    for (std::size_t i = 0; i < s.z_what.size(); ++i) {
      const double e = s.z_what[i] - z_what_target[i];
      d += e * e;
    }
    if (d < best) {
      best = d;
      best_slot = static_cast<int>(j);
    }
  }
  if (best_slot < 0) throw IdentificationError("no present object to re-identify");
  return best_slot;
}

}  // namespace ocskill::mp
