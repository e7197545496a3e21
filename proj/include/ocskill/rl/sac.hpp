#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ocskill/nn/adam.hpp"
#include "ocskill/nn/autodiff.hpp"
#include "ocskill/nn/layers.hpp"
#include "ocskill/rl/replay.hpp"

namespace ocskill::rl {

struct SacConfig {
  ObsKind obs_kind = ObsKind::wrist;
  int image_size = 64;
  std::vector<int> filters{8, 16, 32, 64};
  std::vector<int> strides{2, 2, 2, 2};
  int latent = 50;
  int hidden = 128;
  float lr = 1e-3f;
  float alpha_lr = 1e-3f;
  double gamma = 0.99;
  double tau = 0.005;
  int target_update_interval = 2;
  int actor_update_interval = 2;
  int updates_per_env_step = 10;
  int batch = 64;
  std::size_t buffer_capacity = 10000;
  double init_alpha = 0.1;
  double target_entropy = -2.0;
  float log_std_min = -10.0f;
  float log_std_max = 2.0f;
  bool augment = true;
  AugmentConfig augmentation;

  nn::ConvSpec conv_spec() const;
  int flat_dim() const;
};

class SacAgent {
 public:
  SacAgent(const SacConfig& config, std::uint64_t seed);

  const SacConfig& config() const { return config_; }
  double alpha() const;
  /// Normalized action; greedy uses the squashed mean.
  std::array<float, kActionDim> act(const Observation& obs, bool greedy);

  nn::ParameterSet critic;  // "enc.*", "q1.*", "q2.*"
  nn::ParameterSet critic_target;
  nn::ParameterSet actor;        // "pi.*"
  nn::ParameterSet temperature;  // "log_alpha"
  nn::AdamState critic_opt;
  nn::AdamState actor_opt;
  nn::AdamState alpha_opt;
  std::int64_t updates = 0;
  std::mt19937_64 rng;

 private:
  SacConfig config_;
};

/// Shared image encoder: conv stack, linear to the latent size, tanh.
nn::Var encode(nn::ParameterSet& params, const nn::Var& images, const SacConfig& config);
std::pair<nn::Var, nn::Var> q_heads(nn::ParameterSet& critic, const nn::Var& features, const nn::Var& proprio,
                                    const nn::Var& action, const SacConfig& config);

struct PolicySample {
  nn::Var mean_action;  // tanh(mu)
  nn::Var action;       // tanh(mu + sigma * eps)
  nn::Var log_prob;     // [N, 1]
};
PolicySample actor_forward(nn::ParameterSet& actor, const nn::Var& features, const nn::Var& proprio,
                           const nn::Tensor& eps, const SacConfig& config);

struct SacBatch {
  nn::Tensor obs;
  nn::Tensor obs_proprio;
  nn::Tensor action;
  nn::Tensor reward;
  nn::Tensor next_obs;
  nn::Tensor next_proprio;
  nn::Tensor not_done;
};

SacBatch make_batch(const ReplayBuffer& buffer, const std::vector<std::size_t>& indices, const SacConfig& config,
                    std::mt19937_64& rng);

/// r + gamma * (1 - done) * (min target Q(s', a') - alpha * log pi(a'|s')) with a' drawn using `eps`.
nn::Tensor critic_targets(SacAgent& agent, const SacBatch& batch, const nn::Tensor& eps);

struct UpdateRecord {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double q_mean = 0.0;
  bool actor_updated = false;
  bool target_updated = false;
};

/// One critic step, plus actor/temperature and Polyak steps on their intervals. Throws TrainingError on NaN.
UpdateRecord sac_update(SacAgent& agent, const SacBatch& batch);

void save_agent(const SacAgent& agent, const std::string& path);
SacAgent load_agent(const std::string& path, const SacConfig& config);

class SacPolicy : public SkillPolicy {
 public:
  SacPolicy(SacAgent& agent, bool greedy) : agent_(agent), greedy_(greedy) {}
  void reset(const sim::WorldConfig&, const sim::WorldState&) override {}
  sim::Vec2 act(const sim::WorldConfig& config, const sim::WorldState& state) override;

 private:
  SacAgent& agent_;
  bool greedy_;
};

struct SkillTrainConfig {
  int env_steps = 1500;
  int warmup_updates = 500;
  int horizon = 100;
  int n_obstacles = 1;
  bool full_workspace = false;  // scratch baseline: scene resets and the collision-penalty reward
  int eval_episodes = 50;
  int eval_interval = 250;  // env steps between greedy evaluations; training stops at the bar
  double success_bar = 0.8;
  std::uint64_t seed = 1;
  std::string fault_dump_path;  // agent checkpoint written when training diverges
};

struct CurveRow {
  int env_step = 0;
  int episode = 0;
  double episode_return = 0.0;
  bool episode_success = false;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
};

struct EvalRow {
  int env_step = 0;
  double success = 0.0;
};

struct SkillTrainResult {
  std::vector<CurveRow> curve;  // one row per finished episode
  std::vector<EvalRow> evals;
  double eval_success = 0.0;  // best greedy evaluation; the agent is left at that snapshot
  int env_steps = 0;
  bool reached_bar = false;
  int episodes = 0;
  double seconds = 0.0;
};

/// Seeds the buffer with `demos` (may be empty only for the full-workspace scratch setting), runs the offline warm-up, then interleaves
/// environment steps with updates_per_env_step updates.
SkillTrainResult train_skill(SacAgent& agent, const sim::WorldConfig& world, sim::SocketVariant task,
                             const std::vector<sim::Demonstration>& demos, const SkillTrainConfig& config);

/// Start state for skill episodes: limited task space, or a full scene for the scratch baseline.
sim::WorldState skill_start(const sim::WorldConfig& world, std::uint64_t seed, sim::SocketVariant task,
                            const SkillTrainConfig& config);

/// Greedy success rate over `episodes` fresh starts drawn from `seed`.
double evaluate_policy(SacAgent& agent, const sim::WorldConfig& world, sim::SocketVariant task,
                       const SkillTrainConfig& config, int episodes, std::uint64_t seed);

void write_curve_csv(const std::vector<CurveRow>& curve, const std::string& path);

}  // namespace ocskill::rl
