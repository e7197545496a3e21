#include "ocskill/transition/transition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ocskill/errors.hpp"
#include "ocskill/nn/adam.hpp"
#include "ocskill/nn/checkpoint.hpp"
#include "ocskill/nn/layers.hpp"
#include "ocskill/sim/render.hpp"

namespace ocskill::transition {

using sim::Vec2;

std::vector<sim::Demonstration> collect_transition_dataset(const sim::WorldConfig& config, sim::SocketVariant task,
                                                           std::uint64_t seed, const CollectConfig& collect) {
  if (collect.steps_per_trajectory < 2) throw ConfigError("transition trajectories need at least two steps");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-collect.offset_bound, collect.offset_bound);
  std::vector<sim::Demonstration> out;
  for (int k = 0; k < collect.n_trajectories; ++k) {
    const std::uint64_t scene_seed = rng();
    const int n_obs = static_cast<int>(rng() % static_cast<std::uint64_t>(collect.max_obstacles + 1));
    sim::WorldState s = sim::reset_scene(config, scene_seed, task, n_obs);
    const Vec2 start = sim::rl_start_pose(config, s.target());
    const Vec2 far{u(rng), u(rng)};
    sim::Demonstration rec;
    rec.kind = sim::DemoKind::skill_demo;
    rec.task = task;
    rec.seed = scene_seed;
    rec.reference = start;
    rec.success = true;
    for (int i = 0; i < collect.steps_per_trajectory; ++i) {
      s.ee_pos = start + far * (static_cast<double>(i) / (collect.steps_per_trajectory - 1));
      rec.frames.push_back(sim::observe(config, s, false, true));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<TransitionSample> transition_samples(const std::vector<sim::Demonstration>& records) {
  std::vector<TransitionSample> out;
  for (const auto& r : records)
    for (const auto& f : r.frames) {
      if (!f.wrist) throw ConfigError("transition record frame without a wrist image");
      out.push_back({*f.wrist, r.reference - f.ee_pos});
    }
  return out;
}

namespace {

const nn::ConvSpec kConv{1, {8, 16, 32}, {2, 2, 2}};
constexpr int kFlat = 8 * 8 * 32;
constexpr std::array<int, 3> kHead{kFlat, 128, 2};

double clamp_offset(double v) { return std::clamp(v, -kOffsetBound, kOffsetBound); }

}  // namespace

void init_transition_net(nn::ParameterSet& params, std::mt19937_64& rng) {
  nn::init_conv_stack(params, "tr.conv", kConv, rng);
  nn::init_mlp(params, "tr.head", kHead, rng);
}

nn::Var transition_forward(nn::ParameterSet& params, const nn::Var& images) {
  auto h = nn::conv2d_forward(params, "tr.conv", images, kConv, nn::Activation::leaky_relu);
  h = nn::reshape(h, {images->value.dim(0), kFlat});
  return nn::mlp_forward(params, "tr.head", h, kHead, nn::Activation::leaky_relu);
}

nn::Tensor wrist_tensor(const std::vector<const sim::Image*>& images) {
  if (images.empty()) throw ConfigError("wrist_tensor: empty batch");
  const int h = images[0]->height, w = images[0]->width;
  nn::Tensor t({static_cast<int>(images.size()), h, w, 1});
  std::size_t o = 0;
  for (const auto* img : images) {
    if (img->height != h || img->width != w || img->channels != 1) throw ConfigError("wrist images must be gray and equal size");
    for (auto v : img->pixels) t[o++] = v / 255.0f;
  }
  return t;
}

Vec2 predict_offset(TransitionNet& net, const sim::Image& wrist) {
  nn::NoGradGuard guard;
  const auto y = transition_forward(net.params, nn::constant(wrist_tensor({&wrist})))->value;
  return {clamp_offset(y[0] * net.offset_scale), clamp_offset(y[1] * net.offset_scale)};
}

namespace {

nn::Tensor target_tensor(const std::vector<TransitionSample>& s, const std::vector<std::size_t>& idx, std::size_t b,
                         std::size_t e, double scale) {
  nn::Tensor t({static_cast<int>(e - b), 2});
  for (std::size_t i = b; i < e; ++i) {
    t.at(static_cast<int>(i - b), 0) = static_cast<float>(s[idx[i]].offset.x / scale);
    t.at(static_cast<int>(i - b), 1) = static_cast<float>(s[idx[i]].offset.y / scale);
  }
  return t;
}

nn::Tensor image_batch(const std::vector<TransitionSample>& s, const std::vector<std::size_t>& idx, std::size_t b,
                       std::size_t e) {
  std::vector<const sim::Image*> imgs;
  for (std::size_t i = b; i < e; ++i) imgs.push_back(&s[idx[i]].wrist);
  return wrist_tensor(imgs);
}

// Mean squared normalized error and per-sample Euclidean errors in meters.
std::pair<double, std::vector<double>> evaluate(TransitionNet& net, const std::vector<TransitionSample>& s,
                                                const std::vector<std::size_t>& idx) {
  nn::NoGradGuard guard;
  double sq = 0.0;
  std::vector<double> errs;
  for (std::size_t b = 0; b < idx.size(); b += 128) {
    const std::size_t e = std::min(idx.size(), b + 128);
    const auto y = transition_forward(net.params, nn::constant(image_batch(s, idx, b, e)))->value;
    for (std::size_t i = b; i < e; ++i) {
      const int r = static_cast<int>(i - b);
      const double px = clamp_offset(y.at(r, 0) * net.offset_scale), py = clamp_offset(y.at(r, 1) * net.offset_scale);
      const Vec2 d{px - s[idx[i]].offset.x, py - s[idx[i]].offset.y};
      const double nx = y.at(r, 0) - s[idx[i]].offset.x / net.offset_scale;
      const double ny = y.at(r, 1) - s[idx[i]].offset.y / net.offset_scale;
      sq += 0.5 * (nx * nx + ny * ny);
      errs.push_back(d.norm());
    }
  }
  return {idx.empty() ? 0.0 : sq / static_cast<double>(idx.size()), errs};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  if (v.size() % 2) return v[m];
  const double hi = v[m];
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
}

}  // namespace

TransitionTrainResult train_transition(const std::vector<TransitionSample>& samples,
                                       const TransitionTrainConfig& config) {
  if (samples.size() < 10) throw ConfigError("train_transition: need at least 10 samples");
  std::mt19937_64 rng(config.seed);
  TransitionTrainResult res;
  init_transition_net(res.net.params, rng);

  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(config.holdout_fraction * samples.size()));
  std::vector<std::size_t> hold(idx.end() - static_cast<std::ptrdiff_t>(n_hold), idx.end());
  std::vector<std::size_t> train(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(n_hold));
  res.n_train = static_cast<int>(train.size());
  res.n_holdout = static_cast<int>(hold.size());

  nn::AdamState adam({config.lr});
  auto [h0, e0] = evaluate(res.net, samples, hold);
  res.holdout_loss.push_back(h0);
  double best = h0;
  nn::ParameterSet best_params = res.net.params;
  int stale = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t b = 0; b < train.size(); b += static_cast<std::size_t>(config.batch)) {
      const std::size_t e = std::min(train.size(), b + static_cast<std::size_t>(config.batch));
      res.net.params.zero_grad();
      auto pred = transition_forward(res.net.params, nn::constant(image_batch(samples, train, b, e)));
      auto loss = nn::mean(nn::square(nn::sub(pred, nn::constant(target_tensor(samples, train, b, e, res.net.offset_scale)))));
      const double lv = loss->value[0];
      if (!std::isfinite(lv)) {
        throw TrainingError("transition network diverged at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + " (loss " + std::to_string(lv) + ")");
      }
      nn::backward(loss);
      nn::adam_step(res.net.params, adam);
      sum += lv;
      ++batches;
    }
    res.train_loss.push_back(sum / std::max(1, batches));
    const double h = evaluate(res.net, samples, hold).first;
    res.holdout_loss.push_back(h);
    if (h < best) {
      stale = h < best * (1.0 - config.min_improvement) ? 0 : stale + 1;
      best = h;
      best_params = res.net.params;
    } else {
      ++stale;
    }
    if (stale >= config.patience) break;
  }
  res.net.params = best_params;
  res.holdout_median_error = median(evaluate(res.net, samples, hold).second);
  return res;
}

TransitionOutcome apply_transition(TransitionNet& net, const sim::WorldConfig& config, const sim::WorldState& state,
                                   double speed_fraction) {
  TransitionOutcome out;
  out.state = state;
  out.predicted = predict_offset(net, sim::render_wrist(config, state));
  const Vec2 target = state.ee_pos + out.predicted;
  const double speed = config.v_max * speed_fraction;
  const double len = out.predicted.norm();
  const int cap = static_cast<int>(std::ceil(len / (speed * config.dt) * std::sqrt(2.0))) + 5;
  for (int k = 0; k < cap && sim::distance(out.state.ee_pos, target) > 1e-9; ++k) {
    const Vec2 v = sim::limit_velocity((target - out.state.ee_pos) * (1.0 / config.dt), speed);
    out.state = sim::step(config, out.state, v, config.dt);
    ++out.steps;
    if (out.state.obstacle_contact || out.state.contact_wrench.norm() > 0.0) out.contact = true;
  }
  return out;
}

void save_transition(const TransitionNet& net, const std::string& path) {
  nn::ParameterSet all = net.params;
  all.add("meta.offset_scale", nn::Tensor::scalar(static_cast<float>(net.offset_scale)));
  nn::save_checkpoint(path, all);
}

TransitionNet load_transition(const std::string& path) {
  auto all = nn::load_checkpoint(path);
  if (!all.contains("tr.head.l1.w") || !all.contains("meta.offset_scale")) {
    throw ConfigError(path + " is not a transition network checkpoint");
  }
  TransitionNet net;
  net.offset_scale = std::round(all.get("meta.offset_scale").value[0] * 1e6) / 1e6;
  for (const auto& [name, p] : all.entries())
    if (name.rfind("tr.", 0) == 0) net.params.add(name, p.value);
  return net;
}

}  // namespace ocskill::transition
