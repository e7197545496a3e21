#include "ocskill/ocgm/ocgm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ocskill/errors.hpp"
#include "ocskill/nn/adam.hpp"
#include "ocskill/nn/autodiff.hpp"
#include "ocskill/nn/checkpoint.hpp"
#include "ocskill/nn/layers.hpp"

namespace ocskill::ocgm {

using sim::Image;

BackgroundModel fit_background(int image_size, int n_renders, std::uint64_t seed, double jitter_bound) {
  if (n_renders < 1) throw ConfigError("fit_background: need at least one render");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-jitter_bound, jitter_bound);
  std::vector<Image> renders;
  for (int k = 0; k < n_renders; ++k) {
    const sim::Vec2 j = jitter_bound > 0.0 ? sim::Vec2{u(rng), u(rng)} : sim::Vec2{};
    renders.push_back(sim::render_objects({}, jittered_camera(image_size, j), 0.0));
  }
  BackgroundModel bg;
  bg.median = Image(image_size, image_size, 3);
  std::vector<std::uint8_t> vals(static_cast<std::size_t>(n_renders));
  for (std::size_t i = 0; i < bg.median.pixels.size(); ++i) {
    for (int k = 0; k < n_renders; ++k) vals[static_cast<std::size_t>(k)] = renders[static_cast<std::size_t>(k)].pixels[i];
    std::nth_element(vals.begin(), vals.begin() + n_renders / 2, vals.end());
    bg.median.pixels[i] = vals[static_cast<std::size_t>(n_renders / 2)];
  }
  return bg;
}

std::vector<std::uint8_t> foreground_mask(const Image& image, const BackgroundModel& bg) {
  if (image.height != bg.median.height || image.width != bg.median.width || image.channels != 3) {
    throw ConfigError("foreground_mask: image does not match the background model");
  }
  const int h = image.height, w = image.width, d = bg.dilation;
  const int thr = static_cast<int>(std::lround(bg.threshold * 255.0));
  std::vector<std::uint8_t> fg(static_cast<std::size_t>(h) * w, 0);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      bool matched = false;
      for (int di = -d; di <= d && !matched; ++di)
        for (int dj = -d; dj <= d && !matched; ++dj) {
          const int y = i + di, x = j + dj;
          if (y < 0 || x < 0 || y >= h || x >= w) continue;
          bool close = true;
          for (int c = 0; c < 3; ++c) close = close && std::abs(image.at(i, j, c) - bg.median.at(y, x, c)) <= thr;
          matched = close;
        }
      fg[static_cast<std::size_t>(i) * w + j] = matched ? 0 : 1;
    }
  return fg;
}

Image extract_patch(const Image& image, const std::vector<std::uint8_t>& mask, double cx, double cy) {
  Image patch(kPatchSize, kPatchSize, 3);
  const int x0 = static_cast<int>(std::floor(cx)) - kPatchSize / 2;
  const int y0 = static_cast<int>(std::floor(cy)) - kPatchSize / 2;
  for (int i = 0; i < kPatchSize; ++i)
    for (int j = 0; j < kPatchSize; ++j) {
      const int y = y0 + i, x = x0 + j;
      if (y < 0 || x < 0 || y >= image.height || x >= image.width) continue;
      if (!mask[static_cast<std::size_t>(y) * image.width + x]) continue;
      for (int c = 0; c < 3; ++c) patch.at(i, j, c) = image.at(y, x, c);
    }
  return patch;
}

SceneDecomposition discover_objects(const Image& image, const BackgroundModel& bg, const PatchEncoder* encoder,
                                    const DiscoveryConfig& config) {
  const auto fg = foreground_mask(image, bg);
  const int h = image.height, w = image.width;
  SceneDecomposition out;
  out.height = h;
  out.width = w;
  std::vector<int> label(fg.size(), -1);
  std::vector<int> stack;
  std::vector<Image> patches;
  int next_label = 0;
  for (int start = 0; start < h * w; ++start) {
    if (!fg[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) continue;
    std::vector<int> pixels;
    stack.push_back(start);
    label[static_cast<std::size_t>(start)] = next_label;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      pixels.push_back(p);
      const int y = p / w, x = p % w;
      const int nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= h || q[1] >= w) continue;
        const int id = q[0] * w + q[1];
        if (fg[static_cast<std::size_t>(id)] && label[static_cast<std::size_t>(id)] < 0) {
          label[static_cast<std::size_t>(id)] = next_label;
          stack.push_back(id);
        }
      }
    }
    ++next_label;
    const int area = static_cast<int>(pixels.size());
    if (area < config.min_area) continue;

    SlotRepr slot;
    slot.area = area;
    int x0 = w, x1 = -1, y0 = h, y1 = -1;
    double sx = 0.0, sy = 0.0;
    std::vector<std::uint8_t> mask(fg.size(), 0);
    for (int p : pixels) {
      const int y = p / w, x = p % w;
      mask[static_cast<std::size_t>(p)] = 1;
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
      sx += x + 0.5;
      sy += y + 0.5;
    }
    slot.z_where = {0.5 * (x0 + x1 + 1), 0.5 * (y0 + y1 + 1), static_cast<double>(x1 - x0 + 1),
                    static_cast<double>(y1 - y0 + 1)};
    slot.centroid = {sx / area, sy / area};
    slot.z_pre = 1.0 / (1.0 + std::exp(-(area - config.min_area) / config.presence_scale));
    if (encoder) patches.push_back(extract_patch(image, mask, slot.z_where[0], slot.z_where[1]));
    out.slots.push_back(std::move(slot));
    out.masks.push_back(std::move(mask));
  }
  if (encoder && !patches.empty()) {
    auto& params = const_cast<nn::ParameterSet&>(encoder->params);
    const nn::Tensor codes = encode_patches(params, patches);
    for (std::size_t k = 0; k < out.slots.size(); ++k) {
      out.slots[k].z_what.assign(codes.data() + k * kCodeDim, codes.data() + (k + 1) * kCodeDim);
    }
  }
  return out;
}

nn::Tensor patches_to_tensor(const std::vector<Image>& patches) {
  nn::Tensor t({static_cast<int>(patches.size()), kPatchSize, kPatchSize, 3});
  std::size_t o = 0;
  for (const auto& p : patches) {
    if (p.height != kPatchSize || p.width != kPatchSize || p.channels != 3) throw ConfigError("patch must be 32x32 RGB");
    for (auto v : p.pixels) t[o++] = v / 255.0f;
  }
  return t;
}

namespace {

const nn::ConvSpec kEncConv{3, {8, 16, 32}, {2, 2, 2}};
constexpr int kFlat = 4 * 4 * 32;
constexpr std::array<int, 2> kEncFc{kFlat, kCodeDim};
constexpr std::array<int, 3> kDecMlp{kCodeDim, 256, kPatchSize * kPatchSize * 3};

nn::Var reconstruct(nn::ParameterSet& params, const nn::Var& x) {
  return nn::sigmoid(nn::mlp_forward(params, "dec", patch_encoder_forward(params, x), kDecMlp, nn::Activation::leaky_relu));
}

nn::Var recon_loss(nn::ParameterSet& params, const nn::Tensor& batch) {
  auto x = nn::constant(batch);
  auto target = nn::constant(batch.reshaped({batch.dim(0), kPatchSize * kPatchSize * 3}));
  return nn::mean(nn::square(nn::sub(reconstruct(params, x), target)));
}

std::vector<Image> gather(const std::vector<Image>& src, const std::vector<std::size_t>& idx, std::size_t b,
                          std::size_t e) {
  std::vector<Image> out;
  for (std::size_t i = b; i < e; ++i) out.push_back(src[idx[i]]);
  return out;
}

}  // namespace

nn::Var patch_encoder_forward(nn::ParameterSet& params, const nn::Var& x) {
  auto h = nn::conv2d_forward(params, "enc.conv", x, kEncConv, nn::Activation::leaky_relu);
  h = nn::reshape(h, {x->value.dim(0), kFlat});
  return nn::l2_normalize_rows(nn::mlp_forward(params, "enc.fc", h, kEncFc, nn::Activation::leaky_relu));
}

void init_patch_autoencoder(nn::ParameterSet& params, std::mt19937_64& rng) {
  nn::init_conv_stack(params, "enc.conv", kEncConv, rng);
  nn::init_mlp(params, "enc.fc", kEncFc, rng);
  nn::init_mlp(params, "dec", kDecMlp, rng);
}

nn::Tensor encode_patches(nn::ParameterSet& params, const std::vector<Image>& patches) {
  nn::NoGradGuard guard;
  return patch_encoder_forward(params, nn::constant(patches_to_tensor(patches)))->value;
}

std::vector<float> encode_patch(const Image& patch, PatchEncoder& encoder) {
  const auto t = encode_patches(encoder.params, {patch});
  return {t.data(), t.data() + kCodeDim};
}

double reconstruction_error(nn::ParameterSet& full, const std::vector<Image>& patches) {
  nn::NoGradGuard guard;
  double total = 0.0;
  const std::size_t chunk = 256;
  for (std::size_t b = 0; b < patches.size(); b += chunk) {
    const std::size_t e = std::min(patches.size(), b + chunk);
    std::vector<Image> part(patches.begin() + static_cast<std::ptrdiff_t>(b), patches.begin() + static_cast<std::ptrdiff_t>(e));
    total += recon_loss(full, patches_to_tensor(part))->value[0] * static_cast<double>(e - b);
  }
  return patches.empty() ? 0.0 : total / static_cast<double>(patches.size());
}

std::vector<Image> collect_patches(const PretrainDataset& dataset, const BackgroundModel& bg,
                                   const DiscoveryConfig& config) {
  std::vector<Image> patches;
  for (const auto& s : dataset.scenes) {
    const auto dec = discover_objects(s.image, bg, nullptr, config);
    for (std::size_t k = 0; k < dec.slots.size(); ++k) {
      patches.push_back(extract_patch(s.image, dec.masks[k], dec.slots[k].z_where[0], dec.slots[k].z_where[1]));
    }
  }
  return patches;
}

AeTrainResult train_patch_autoencoder(const std::vector<Image>& patches, const AeTrainConfig& config) {
  if (patches.empty()) throw ConfigError("train_patch_autoencoder: no patches");
  std::mt19937_64 rng(config.seed);
  AeTrainResult res;
  res.n_patches = static_cast<int>(patches.size());
  init_patch_autoencoder(res.full, rng);

  std::vector<std::size_t> idx(patches.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_hold =
      patches.size() > 1 ? std::max<std::size_t>(1, static_cast<std::size_t>(config.holdout_fraction * patches.size())) : 0;
  const std::size_t n_train = patches.size() - n_hold;
  const auto holdout = gather(patches, idx, n_train, patches.size());
  std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  const auto& eval_set = holdout.empty() ? patches : holdout;

  nn::AdamState adam({config.lr});
  res.holdout_loss.push_back(reconstruction_error(res.full, eval_set));
  double best = res.holdout_loss.back();
  nn::ParameterSet best_params = res.full;
  int stale = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t b = 0; b < n_train; b += static_cast<std::size_t>(config.batch)) {
      const std::size_t e = std::min(n_train, b + static_cast<std::size_t>(config.batch));
      res.full.zero_grad();
      auto loss = recon_loss(res.full, patches_to_tensor(gather(patches, train_idx, b, e)));
      const double lv = loss->value[0];
      if (!std::isfinite(lv)) {
        throw TrainingError("patch autoencoder diverged at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + " (loss " + std::to_string(lv) + ")");
      }
      nn::backward(loss);
      nn::adam_step(res.full, adam);
      sum += lv;
      ++batches;
    }
    res.train_loss.push_back(sum / std::max(1, batches));
    const double h = reconstruction_error(res.full, eval_set);
    res.holdout_loss.push_back(h);
    if (h < best * (1.0 - config.min_improvement)) {
      best = h;
      best_params = res.full;
      stale = 0;
    } else {
      if (h < best) {
        best = h;
        best_params = res.full;
      }
      if (++stale >= config.patience) break;
    }
  }
  res.full = best_params;
  for (const auto& [name, p] : res.full.entries()) {
    if (name.rfind("enc.", 0) == 0) res.encoder.params.add(name, p.value);
  }
  return res;
}

AeTrainResult train_patch_autoencoder(const PretrainDataset& dataset, const BackgroundModel& bg,
                                      const AeTrainConfig& config) {
  if (dataset.count() == 0) throw ConfigError("train_patch_autoencoder: empty dataset");
  return train_patch_autoencoder(collect_patches(dataset, bg), config);
}

void save_encoder(const PatchEncoder& encoder, const std::string& path) { nn::save_checkpoint(path, encoder.params); }

PatchEncoder load_encoder(const std::string& path) {
  PatchEncoder e;
  e.params = nn::load_checkpoint(path);
  if (!e.params.contains("enc.fc.l0.w")) throw ConfigError(path + " is not a patch encoder checkpoint");
  return e;
}

}  // namespace ocskill::ocgm
