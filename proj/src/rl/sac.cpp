#include "ocskill/rl/sac.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "ocskill/errors.hpp"
#include "ocskill/nn/checkpoint.hpp"

namespace ocskill::rl {

namespace {

constexpr float kLogProbEps = 1e-6f;
const float kHalfLog2Pi = 0.5f * std::log(2.0f * static_cast<float>(M_PI));

std::array<int, 4> q_widths(const SacConfig& c) { return {c.latent + kProprioDim + kActionDim, c.hidden, c.hidden, 1}; }
std::array<int, 4> pi_widths(const SacConfig& c) { return {c.latent + kProprioDim, c.hidden, c.hidden, 2 * kActionDim}; }
std::array<int, 2> fc_widths(const SacConfig& c) { return {c.flat_dim(), c.latent}; }

void check_finite(double v, const char* what, std::int64_t update) {
  if (!std::isfinite(v)) {
    throw TrainingError(std::string(what) + " is not finite at update " + std::to_string(update));
  }
}

}  // namespace

nn::ConvSpec SacConfig::conv_spec() const { return {obs_channels(obs_kind), filters, strides}; }

int SacConfig::flat_dim() const {
  const auto hwc = nn::conv_stack_output_hwc(conv_spec(), image_size, image_size);
  return hwc[0] * hwc[1] * hwc[2];
}

SacAgent::SacAgent(const SacConfig& config, std::uint64_t seed)
    : critic_opt({config.lr}), actor_opt({config.lr}), alpha_opt({config.alpha_lr}), rng(seed), config_(config) {
  if (!(config.init_alpha > 0.0)) throw ConfigError("initial temperature must be positive");
  if (config.filters.size() != config.strides.size()) throw ConfigError("filters and strides differ in length");
  nn::init_conv_stack(critic, "enc.conv", config.conv_spec(), rng);
  nn::init_mlp(critic, "enc.fc", fc_widths(config), rng);
  nn::init_mlp(critic, "q1", q_widths(config), rng);
  nn::init_mlp(critic, "q2", q_widths(config), rng);
  critic_target = critic;
  nn::init_mlp(actor, "pi", pi_widths(config), rng);
  temperature.add("log_alpha", nn::Tensor::scalar(static_cast<float>(std::log(config.init_alpha))));
}

double SacAgent::alpha() const { return std::exp(static_cast<double>(temperature.get("log_alpha").value[0])); }

nn::Var encode(nn::ParameterSet& params, const nn::Var& images, const SacConfig& config) {
  auto h = nn::conv2d_forward(params, "enc.conv", images, config.conv_spec(), nn::Activation::leaky_relu);
  h = nn::reshape(h, {images->value.dim(0), config.flat_dim()});
  return nn::tanh(nn::mlp_forward(params, "enc.fc", h, fc_widths(config), nn::Activation::linear));
}

std::pair<nn::Var, nn::Var> q_heads(nn::ParameterSet& critic, const nn::Var& features, const nn::Var& proprio,
                                    const nn::Var& action, const SacConfig& config) {
  const auto in = nn::concat_cols(nn::concat_cols(features, proprio), action);
  return {nn::mlp_forward(critic, "q1", in, q_widths(config), nn::Activation::leaky_relu),
          nn::mlp_forward(critic, "q2", in, q_widths(config), nn::Activation::leaky_relu)};
}

PolicySample actor_forward(nn::ParameterSet& actor, const nn::Var& features, const nn::Var& proprio,
                           const nn::Tensor& eps, const SacConfig& config) {
  const auto out = nn::mlp_forward(actor, "pi", nn::concat_cols(features, proprio), pi_widths(config),
                                   nn::Activation::leaky_relu);
  const auto mu = nn::slice_cols(out, 0, kActionDim);
  const float half = 0.5f * (config.log_std_max - config.log_std_min);
  const auto log_std =
      nn::add_scalar(nn::scale(nn::tanh(nn::slice_cols(out, kActionDim, 2 * kActionDim)), half), config.log_std_min + half);
  const auto noise = nn::constant(eps);
  const auto u = nn::add(mu, nn::mul(nn::exp(log_std), noise));
  PolicySample s;
  s.mean_action = nn::tanh(mu);
  s.action = nn::tanh(u);
  // Gaussian log-density of u, then the tanh change of variables.
  const auto gauss = nn::add_scalar(nn::sub(nn::scale(nn::square(noise), -0.5f), log_std), -kHalfLog2Pi);
  const auto squash = nn::log_sech2(u, kLogProbEps);
  s.log_prob = nn::sum_cols(nn::sub(gauss, squash));
  return s;
}

std::array<float, kActionDim> SacAgent::act(const Observation& obs, bool greedy) {
  nn::NoGradGuard guard;
  const Observation* p = &obs;
  const auto feat = encode(critic, nn::constant(image_batch({p})), config_);
  nn::Tensor eps({1, kActionDim});
  if (!greedy) {
    std::normal_distribution<float> n(0.0f, 1.0f);
    for (int k = 0; k < kActionDim; ++k) eps.at(0, k) = n(rng);
  }
  const auto s = actor_forward(actor, feat, nn::constant(proprio_batch({p})), eps, config_);
  const auto& a = greedy ? s.mean_action->value : s.action->value;
  return {a.at(0, 0), a.at(0, 1)};
}

SacBatch make_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& indices, const SacConfig& config,
                    std::mt19937_64& rng) {
  std::vector<const Observation*> obs, next;
  for (auto i : indices) {
    obs.push_back(&buffer.at(i).obs);
    next.push_back(&buffer.at(i).next_obs);
  }
  SacBatch b;
  b.obs = image_batch(obs);
  b.next_obs = image_batch(next);
  if (config.augment) {
    augment_batch(b.obs, config.augmentation, rng);
    augment_batch(b.next_obs, config.augmentation, rng);
  }
  b.obs_proprio = proprio_batch(obs);
  b.next_proprio = proprio_batch(next);
  const int n = static_cast<int>(indices.size());
  b.action = nn::Tensor({n, kActionDim});
  b.reward = nn::Tensor({n, 1});
  b.not_done = nn::Tensor({n, 1});
  for (int r = 0; r < n; ++r) {
    const auto& t = buffer.at(indices[static_cast<std::size_t>(r)]);
    for (int k = 0; k < kActionDim; ++k) b.action.at(r, k) = t.action[static_cast<std::size_t>(k)];
    b.reward.at(r, 0) = t.reward;
    b.not_done.at(r, 0) = t.done ? 0.0f : 1.0f;
  }
  return b;
}

nn::Tensor critic_targets(SacAgent& agent, const SacBatch& batch, const nn::Tensor& eps) {
  nn::NoGradGuard guard;
  const auto& cfg = agent.config();
  const auto next_prop = nn::constant(batch.next_proprio);
  const auto next_images = nn::constant(batch.next_obs);
  const auto pi = actor_forward(agent.actor, encode(agent.critic, next_images, cfg), next_prop, eps, cfg);
  const auto [t1, t2] = q_heads(agent.critic_target, encode(agent.critic_target, next_images, cfg), next_prop,
                                pi.action, cfg);
  const double alpha = agent.alpha();
  nn::Tensor y({batch.reward.dim(0), 1});
  for (int r = 0; r < y.dim(0); ++r) {
    const double soft = std::min(t1->value.at(r, 0), t2->value.at(r, 0)) - alpha * pi.log_prob->value.at(r, 0);
    y.at(r, 0) = static_cast<float>(batch.reward.at(r, 0) + cfg.gamma * batch.not_done.at(r, 0) * soft);
  }
  return y;
}

UpdateRecord sac_update(SacAgent& agent, const SacBatch& batch) {
  const auto& cfg = agent.config();
  const int n = batch.obs.dim(0);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  auto draw = [&] {
    nn::Tensor e({n, kActionDim});
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = normal(agent.rng);
    return e;
  };
  UpdateRecord rec;
  const std::int64_t u = agent.updates;

  const nn::Tensor y = critic_targets(agent, batch, draw());
  agent.critic.zero_grad();
  const auto prop = nn::constant(batch.obs_proprio);
  const auto feat = encode(agent.critic, nn::constant(batch.obs), cfg);
  const auto [q1, q2] = q_heads(agent.critic, feat, prop, nn::constant(batch.action), cfg);
  const auto target = nn::constant(y);
  const auto critic_loss = nn::add(nn::mean(nn::square(nn::sub(q1, target))), nn::mean(nn::square(nn::sub(q2, target))));
  rec.critic_loss = critic_loss->value[0];
  check_finite(rec.critic_loss, "critic loss", u);
  double qsum = 0.0;
  for (int r = 0; r < n; ++r) qsum += q1->value.at(r, 0);
  rec.q_mean = qsum / n;
  nn::backward(critic_loss);
  nn::adam_step(agent.critic, agent.critic_opt);

  if (u % cfg.actor_update_interval == 0) {
    const auto f = nn::detach(feat);
    const auto pi = actor_forward(agent.actor, f, prop, draw(), cfg);
    const auto [a1, a2] = q_heads(agent.critic, f, prop, pi.action, cfg);
    const auto alpha = nn::constant(nn::Tensor::scalar(static_cast<float>(agent.alpha())));
    const auto actor_loss = nn::mean(nn::sub(nn::mul_scalar_var(pi.log_prob, alpha), nn::minimum(a1, a2)));
    rec.actor_loss = actor_loss->value[0];
    check_finite(rec.actor_loss, "actor loss", u);
    agent.actor.zero_grad();
    nn::backward(actor_loss);
    nn::adam_step(agent.actor, agent.actor_opt);

    double entropy_gap = 0.0;
    for (int r = 0; r < n; ++r) entropy_gap += pi.log_prob->value.at(r, 0) + cfg.target_entropy;
    entropy_gap /= n;
    agent.temperature.zero_grad();
    const auto alpha_loss = nn::scale(nn::param(agent.temperature, "log_alpha"), static_cast<float>(-entropy_gap));
    rec.alpha_loss = alpha_loss->value[0];
    check_finite(rec.alpha_loss, "temperature loss", u);
    nn::backward(nn::sum(alpha_loss));
    nn::adam_step(agent.temperature, agent.alpha_opt);
    rec.actor_updated = true;
  }

  if (u % cfg.target_update_interval == 0) {
    agent.critic_target.polyak_update(agent.critic, static_cast<float>(cfg.tau));
    rec.target_updated = true;
  }
  rec.alpha = agent.alpha();
  ++agent.updates;
  return rec;
}

void save_agent(const SacAgent& agent, const std::string& path) {
  nn::ParameterSet all;
  nn::merge_prefixed(all, agent.critic, "critic.");
  nn::merge_prefixed(all, agent.critic_target, "target.");
  nn::merge_prefixed(all, agent.actor, "actor.");
  nn::merge_prefixed(all, agent.temperature, "temp.");
  nn::save_checkpoint(path, all);
}

SacAgent load_agent(const std::string& path, const SacConfig& config) {
  const auto all = nn::load_checkpoint(path);
  SacAgent agent(config, 0);
  auto fill = [&](nn::ParameterSet& dst, const std::string& prefix) {
    const auto src = nn::extract_prefixed(all, prefix);
    if (src.count() != dst.count()) throw ConfigError(path + ": agent checkpoint does not match the configuration");
    for (const auto& [name, p] : src.entries()) {
      if (!dst.contains(name) || dst.get(name).value.shape() != p.value.shape()) {
        throw ConfigError(path + ": unexpected parameter " + prefix + name);
      }
    }
    dst.copy_values_from(src);
  };
  fill(agent.critic, "critic.");
  fill(agent.critic_target, "target.");
  fill(agent.actor, "actor.");
  fill(agent.temperature, "temp.");
  return agent;
}

sim::Vec2 SacPolicy::act(const sim::WorldConfig& config, const sim::WorldState& state) {
  return to_velocity(config, agent_.act(make_observation(config, state, agent_.config().obs_kind), greedy_));
}

sim::WorldState skill_start(const sim::WorldConfig& world, std::uint64_t seed, sim::SocketVariant task,
                            const SkillTrainConfig& config) {
  return config.full_workspace ? sim::reset_scene(world, seed, task, config.n_obstacles)
                               : sim::reset_limited(world, seed, task, config.n_obstacles);
}

namespace {

double step_reward(const sim::WorldState& s, const GoalRegion& goal, bool penalty) {
  return penalty ? collision_penalty_reward(s, goal) : sparse_reward(s, goal);
}

}  // namespace

double evaluate_policy(SacAgent& agent, const sim::WorldConfig& world, sim::SocketVariant task,
                       const SkillTrainConfig& config, int episodes, std::uint64_t seed) {
  if (episodes <= 0) throw UsageError("evaluate_policy: episodes must be positive");
  std::mt19937_64 rng(seed);
  SacPolicy policy(agent, true);
  int wins = 0;
  for (int e = 0; e < episodes; ++e) {
    if (run_skill(world, skill_start(world, rng(), task, config), policy, config.horizon).success) ++wins;
  }
  return static_cast<double>(wins) / episodes;
}

SkillTrainResult train_skill(SacAgent& agent, const sim::WorldConfig& world, sim::SocketVariant task,
                             const std::vector<sim::Demonstration>& demos, const SkillTrainConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& cfg = agent.config();
  SkillTrainResult res;
  ReplayBuffer buffer(cfg.buffer_capacity);
  if (!demos.empty()) seed_replay_with_demos(buffer, demos, world, cfg.obs_kind);
  if (demos.empty() && !config.full_workspace) throw ConfigError("skill training needs demonstrations");
  std::mt19937_64 rng(config.seed);
  const std::uint64_t eval_seed = rng();

  UpdateRecord last;
  auto update = [&] {
    if (buffer.size() < static_cast<std::size_t>(cfg.batch)) return;
    try {
      const auto b = make_batch(buffer, buffer.sample_indices(static_cast<std::size_t>(cfg.batch), rng), cfg, rng);
      const auto r = sac_update(agent, b);
      last.critic_loss = r.critic_loss;
      if (r.actor_updated) last.actor_loss = r.actor_loss;
      last.alpha = r.alpha;
    } catch (const TrainingError&) {
      if (!config.fault_dump_path.empty()) save_agent(agent, config.fault_dump_path);
      throw;
    }
  };
  for (int i = 0; i < config.warmup_updates; ++i) update();

  SacAgent best = agent;
  res.eval_success = -1.0;
  auto evaluate = [&](int step) {
    const double s = evaluate_policy(agent, world, task, config, config.eval_episodes, eval_seed);
    res.evals.push_back({step, s});
    if (s > res.eval_success) {
      res.eval_success = s;
      best = agent;
    }
    return s >= config.success_bar;
  };

  sim::WorldState state = skill_start(world, rng(), task, config);
  GoalRegion goal = goal_region(world, state.target());
  Observation obs = make_observation(world, state, cfg.obs_kind);
  int ep_steps = 0;
  double ep_return = 0.0;
  bool done_training = false;
  for (int step = 1; step <= config.env_steps && !done_training; ++step) {
    const auto a = agent.act(obs, false);
    state = sim::step(world, state, to_velocity(world, a), world.dt);
    const double r = step_reward(state, goal, config.full_workspace);
    const bool success = sparse_reward(state, goal) > 0.0;
    Observation next = make_observation(world, state, cfg.obs_kind);
    buffer.add({obs, a, static_cast<float>(r), next, success, false});
    obs = std::move(next);
    ep_return += r;
    ++ep_steps;
    for (int k = 0; k < cfg.updates_per_env_step; ++k) update();
    res.env_steps = step;

    if (success || ep_steps >= config.horizon) {
      res.curve.push_back({step, res.episodes, ep_return, success, last.critic_loss, last.actor_loss, last.alpha});
      ++res.episodes;
      state = skill_start(world, rng(), task, config);
      goal = goal_region(world, state.target());
      obs = make_observation(world, state, cfg.obs_kind);
      ep_steps = 0;
      ep_return = 0.0;
    }
    if (step % config.eval_interval == 0 || step == config.env_steps) done_training = evaluate(step);
  }
  if (res.evals.empty()) evaluate(0);
  agent = best;
  res.reached_bar = res.eval_success >= config.success_bar;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

void write_curve_csv(const std::vector<CurveRow>& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "step,episode,reward,success,critic_loss,actor_loss,alpha\n" << std::setprecision(9);
  for (const auto& r : curve) {
    out << r.env_step << ',' << r.episode << ',' << r.episode_return << ',' << (r.episode_success ? 1 : 0) << ','
        << r.critic_loss << ',' << r.actor_loss << ',' << r.alpha << '\n';
  }
}

}  // namespace ocskill::rl
