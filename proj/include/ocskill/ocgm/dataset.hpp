#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocskill/sim/render.hpp"
#include "ocskill/sim/world.hpp"

namespace ocskill::ocgm {

struct PretrainScene {
  sim::Image image;
  sim::Vec2 jitter;  // camera translation applied for this render, meters
  std::vector<sim::ObjectSpec> objects;
};

struct PretrainDataset {
  std::vector<PretrainScene> scenes;
  double jitter_bound = 0.01;
  std::uint64_t seed = 0;
  std::size_t count() const { return scenes.size(); }
};

/// Palette the pretraining primitives draw their colors from.
const std::vector<sim::Color>& primitive_palette();

/// Camera of `image_size` pixels over the unit workspace, translated by `jitter` meters.
sim::CameraModel jittered_camera(int image_size, sim::Vec2 jitter);

/// Random scenes of 2-6 primitives (rects, discs, slotted mounts) with a
/// jittered external camera; every object lies fully inside the frame.
PretrainDataset generate_pretraining_set(int n_scenes, std::uint64_t seed, double jitter_bound = 0.01,
                                         int image_size = 128);

/// Directory of binary PPM images plus manifest.json.
void save_pretraining_set(const PretrainDataset& dataset, const std::string& dir);
PretrainDataset load_pretraining_set(const std::string& dir);

void write_ppm(const sim::Image& img, const std::string& path);
sim::Image read_ppm(const std::string& path);

}  // namespace ocskill::ocgm
