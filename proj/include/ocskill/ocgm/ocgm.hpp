#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ocskill/nn/autodiff.hpp"
#include "ocskill/nn/params.hpp"
#include "ocskill/nn/tensor.hpp"
#include "ocskill/ocgm/dataset.hpp"
#include "ocskill/sim/render.hpp"

namespace ocskill::ocgm {

inline constexpr int kPatchSize = 32;
inline constexpr int kCodeDim = 32;

struct SlotRepr {
  std::vector<float> z_what;       // unit norm, empty when no encoder was supplied
  std::array<double, 4> z_where{};  // (cx, cy, w, h) in pixels
  double z_pre = 0.0;
  sim::Vec2 centroid;  // mask centroid in pixel coordinates
  int area = 0;
};

struct SceneDecomposition {
  std::vector<SlotRepr> slots;
  std::vector<std::vector<std::uint8_t>> masks;  // one height*width binary mask per slot
  int height = 0;
  int width = 0;
  std::uint64_t source_id = 0;
};

struct BackgroundModel {
  sim::Image median;
  double threshold = 0.1;  // fraction of the pixel range, per channel
  int dilation = 2;        // pixels of camera jitter absorbed
};

/// Per-pixel median over `n_renders` empty-table renders with camera jitter.
BackgroundModel fit_background(int image_size, int n_renders, std::uint64_t seed, double jitter_bound = 0.01);

/// Pixels whose color matches no background pixel within `dilation`.
std::vector<std::uint8_t> foreground_mask(const sim::Image& image, const BackgroundModel& bg);

struct PatchEncoder {
  nn::ParameterSet params;  // "enc.*" entries
};

struct DiscoveryConfig {
  int min_area = 12;
  double presence_scale = 8.0;
};

/// Connected foreground components as slots; z_what is filled when `encoder` is given.
SceneDecomposition discover_objects(const sim::Image& image, const BackgroundModel& bg,
                                    const PatchEncoder* encoder = nullptr, const DiscoveryConfig& config = {});

/// kPatchSize^2 RGB window centered on (cx, cy) keeping only mask pixels.
sim::Image extract_patch(const sim::Image& image, const std::vector<std::uint8_t>& mask, double cx, double cy);

/// [N, kPatchSize, kPatchSize, 3] in [0, 1].
nn::Tensor patches_to_tensor(const std::vector<sim::Image>& patches);

void init_patch_autoencoder(nn::ParameterSet& params, std::mt19937_64& rng);
/// Conv stack, linear to kCodeDim, row L2 normalization.
nn::Var patch_encoder_forward(nn::ParameterSet& params, const nn::Var& patches);
/// Unit-norm codes [N, kCodeDim].
nn::Tensor encode_patches(nn::ParameterSet& params, const std::vector<sim::Image>& patches);
std::vector<float> encode_patch(const sim::Image& patch, PatchEncoder& encoder);

struct AeTrainConfig {
  int max_epochs = 40;
  int batch = 32;
  float lr = 1e-3f;
  double holdout_fraction = 0.1;
  int patience = 4;
  double min_improvement = 0.01;  // relative holdout gain that resets patience
  std::uint64_t seed = 1;
};

struct AeTrainResult {
  PatchEncoder encoder;
  nn::ParameterSet full;  // encoder and decoder
  std::vector<double> train_loss;
  std::vector<double> holdout_loss;  // index 0 is before any update
  int n_patches = 0;
};

/// Patches extracted with discover_objects from every scene.
std::vector<sim::Image> collect_patches(const PretrainDataset& dataset, const BackgroundModel& bg,
                                        const DiscoveryConfig& config = {});

AeTrainResult train_patch_autoencoder(const std::vector<sim::Image>& patches, const AeTrainConfig& config = {});
AeTrainResult train_patch_autoencoder(const PretrainDataset& dataset, const BackgroundModel& bg,
                                      const AeTrainConfig& config = {});

/// Mean squared reconstruction error per pixel channel.
double reconstruction_error(nn::ParameterSet& full, const std::vector<sim::Image>& patches);

void save_encoder(const PatchEncoder& encoder, const std::string& path);
PatchEncoder load_encoder(const std::string& path);

}  // namespace ocskill::ocgm
