#include "ocskill/rl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ocskill/errors.hpp"
#include "ocskill/nn/adam.hpp"
#include "ocskill/nn/checkpoint.hpp"

namespace ocskill::rl {

using sim::Vec2;

namespace {

std::array<int, 4> head_widths(const SacConfig& a) { return {a.latent + kProprioDim, a.hidden, a.hidden, kActionDim}; }

struct BcSample {
  Observation obs;
  std::array<float, kActionDim> action;
};

}  // namespace

BcNet init_bc(const SacConfig& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BcNet net;
  net.arch = arch;
  nn::init_conv_stack(net.params, "enc.conv", arch.conv_spec(), rng);
  const std::array<int, 2> fc{arch.flat_dim(), arch.latent};
  nn::init_mlp(net.params, "enc.fc", fc, rng);
  nn::init_mlp(net.params, "bc", head_widths(arch), rng);
  return net;
}

nn::Var bc_forward(BcNet& net, const nn::Var& images, const nn::Var& proprio) {
  const auto feat = encode(net.params, images, net.arch);
  return nn::tanh(nn::mlp_forward(net.params, "bc", nn::concat_cols(feat, proprio), head_widths(net.arch),
                                  nn::Activation::leaky_relu));
}

std::array<float, kActionDim> bc_act(BcNet& net, const Observation& obs) {
  nn::NoGradGuard guard;
  const Observation* p = &obs;
  const auto y = bc_forward(net, nn::constant(image_batch({p})), nn::constant(proprio_batch({p})))->value;
  return {y.at(0, 0), y.at(0, 1)};
}

BcTrainResult bc_train(const std::vector<sim::Demonstration>& demos, const sim::WorldConfig& world,
                       const SacConfig& arch, const BcTrainConfig& config) {
  std::vector<BcSample> samples;
  for (const auto& d : demos)
    for (std::size_t t = 0; t + 1 < d.frames.size(); ++t)
      samples.push_back({frame_observation(world, d.frames[t], arch.obs_kind), from_velocity(world, d.frames[t].action)});
  if (samples.size() < 10) throw ConfigError("bc_train: need at least 10 demonstration steps");

  std::mt19937_64 rng(config.seed);
  BcTrainResult res;
  res.net = init_bc(arch, rng());
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(config.holdout_fraction * samples.size()));
  std::vector<std::size_t> hold(idx.end() - static_cast<std::ptrdiff_t>(n_hold), idx.end());
  std::vector<std::size_t> train(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(n_hold));
  res.n_train = static_cast<int>(train.size());
  res.n_holdout = static_cast<int>(hold.size());

  auto batch = [&](const std::vector<std::size_t>& ids, std::size_t b, std::size_t e, bool augment) {
    std::vector<const Observation*> obs;
    nn::Tensor target({static_cast<int>(e - b), kActionDim});
    for (std::size_t i = b; i < e; ++i) {
      obs.push_back(&samples[ids[i]].obs);
      for (int k = 0; k < kActionDim; ++k) target.at(static_cast<int>(i - b), k) = samples[ids[i]].action[static_cast<std::size_t>(k)];
    }
    auto images = image_batch(obs);
    if (augment) augment_batch(images, arch.augmentation, rng);
    return std::tuple{images, proprio_batch(obs), target};
  };
  auto holdout_loss = [&] {
    nn::NoGradGuard guard;
    double sum = 0.0;
    for (std::size_t b = 0; b < hold.size(); b += 128) {
      const std::size_t e = std::min(hold.size(), b + 128);
      auto [img, prop, target] = batch(hold, b, e, false);
      const auto y = bc_forward(res.net, nn::constant(img), nn::constant(prop));
      sum += nn::mean(nn::square(nn::sub(y, nn::constant(target))))->value[0] * static_cast<double>(e - b);
    }
    return sum / static_cast<double>(hold.size());
  };

  nn::AdamState adam({config.lr});
  double best = holdout_loss();
  res.holdout_loss.push_back(best);
  nn::ParameterSet best_params = res.net.params;
  int stale = 0;
  for (int epoch = 0; epoch < config.max_epochs && stale < config.patience; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t b = 0; b < train.size(); b += static_cast<std::size_t>(config.batch)) {
      const std::size_t e = std::min(train.size(), b + static_cast<std::size_t>(config.batch));
      auto [img, prop, target] = batch(train, b, e, config.augment);
      res.net.params.zero_grad();
      const auto loss =
          nn::mean(nn::square(nn::sub(bc_forward(res.net, nn::constant(img), nn::constant(prop)), nn::constant(target))));
      if (!std::isfinite(loss->value[0])) throw TrainingError("behaviour cloning diverged at epoch " + std::to_string(epoch));
      nn::backward(loss);
      nn::adam_step(res.net.params, adam);
      sum += loss->value[0];
      ++batches;
    }
    res.train_loss.push_back(sum / std::max(1, batches));
    const double h = holdout_loss();
    res.holdout_loss.push_back(h);
    if (h < best) {
      best = h;
      best_params = res.net.params;
      stale = 0;
    } else {
      ++stale;
    }
  }
  res.net.params = best_params;
  return res;
}

void save_bc(const BcNet& net, const std::string& path) { nn::save_checkpoint(path, net.params); }

BcNet load_bc(const std::string& path, const SacConfig& arch) {
  BcNet net = init_bc(arch, 0);
  const auto loaded = nn::load_checkpoint(path);
  if (loaded.count() != net.params.count()) throw ConfigError(path + " is not a behaviour-cloning checkpoint");
  for (const auto& [name, p] : loaded.entries()) {
    if (!net.params.contains(name) || net.params.get(name).value.shape() != p.value.shape()) {
      throw ConfigError(path + ": unexpected parameter " + name);
    }
  }
  net.params.copy_values_from(loaded);
  return net;
}

Vec2 BcPolicy::act(const sim::WorldConfig& config, const sim::WorldState& state) {
  return to_velocity(config, bc_act(net_, make_observation(config, state, net_.arch.obs_kind)));
}

DemoReplayPolicy::DemoReplayPolicy(const sim::Demonstration& demo) {
  for (std::size_t t = 0; t + 1 < demo.frames.size(); ++t) steps_.push_back(demo.frames[t + 1].ee_pos - demo.frames[t].ee_pos);
}

Vec2 DemoReplayPolicy::act(const sim::WorldConfig& config, const sim::WorldState&) {
  if (index_ >= steps_.size()) {
    index_ = steps_.size() + 1;
    return {};
  }
  return steps_[index_++] * (1.0 / config.dt);
}

void HeuristicPolicy::reset(const sim::WorldConfig&, const sim::WorldState& state) {
  phase_ = Phase::approach;
  start_ = state.ee_pos;
  start_step_ = state.time_step;
  contact_ = {};
  sweep_index_ = 0;
  insert_steps_ = 0;
  edge_ = {false, false};
  recovering_ = false;
  prev_x_ = state.ee_pos.x;
  prev_cmd_x_ = 0.0;
}

Vec2 HeuristicPolicy::act(const sim::WorldConfig& config, const sim::WorldState& state) {
  const double down = -config_.speed_fraction * config.v_max;
  const double speed = config_.speed_fraction * config.v_max;
  if (state.insertion_depth > 0.0) phase_ = Phase::insert;

  if (phase_ == Phase::approach) {
    if (state.contact_wrench.y > config_.contact_force) {
      phase_ = Phase::sweep;
      contact_ = state.ee_pos;
      sweep_index_ = 1;
    } else if (start_.y - state.ee_pos.y > config_.max_descent ||
               (state.time_step > start_step_ && state.ee_vel.y > 0.5 * down)) {
      phase_ = Phase::failed;
      return {};
    } else {
      return {0.0, down};
    }
  }

  if (phase_ == Phase::sweep) {
    // Slipping off a surface edge closes that side; climb back and sweep the other one.
    if (recovering_) {
      if (state.ee_pos.y < contact_.y) return {0.0, speed};
      recovering_ = false;
    }
    const int side = sweep_index_ % 2;
    const bool stalled = std::abs(prev_cmd_x_) > 0.0 && std::abs(state.ee_pos.x - prev_x_) < 0.25 * std::abs(prev_cmd_x_) * config.dt;
    prev_x_ = state.ee_pos.x;
    prev_cmd_x_ = 0.0;
    if (stalled || state.ee_pos.y < contact_.y - config_.lost_surface_drop) {
      edge_[static_cast<std::size_t>(side)] = true;
      if (edge_[0] && edge_[1]) {
        phase_ = Phase::failed;
        return {};
      }
      recovering_ = true;
      ++sweep_index_;
      return {0.0, speed};
    }
    const int ring = (sweep_index_ + 1) / 2;
    const double amplitude = ring * config_.sweep_pitch;
    if (amplitude > config_.sweep_radius + 1e-12) {
      phase_ = Phase::failed;
      return {};
    }
    const double target = contact_.x + (side ? amplitude : -amplitude);
    const double dx = target - state.ee_pos.x;
    if (std::abs(dx) <= 1e-9 || edge_[static_cast<std::size_t>(side)]) {
      ++sweep_index_;
      return act(config, state);
    }
    prev_cmd_x_ = std::clamp(dx / config.dt, -speed, speed);
    return {prev_cmd_x_, down};
  }

  if (phase_ == Phase::insert) {
    ++insert_steps_;
    const double dither = config_.dither_fraction * config.v_max * ((insert_steps_ / 2) % 2 ? 1.0 : -1.0);
    return {dither, down};
  }
  return {};
}

}  // namespace ocskill::rl
