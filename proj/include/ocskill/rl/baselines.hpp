#pragma once

#include <cstdint>
#include <vector>

#include "ocskill/nn/params.hpp"
#include "ocskill/rl/env.hpp"
#include "ocskill/rl/sac.hpp"

namespace ocskill::rl {

/// Behaviour cloning: the SAC encoder architecture followed by an MLP with a tanh output.
struct BcNet {
  SacConfig arch;
  nn::ParameterSet params;  // "enc.*", "bc.*"
};

struct BcTrainConfig {
  int max_epochs = 40;
  int batch = 64;
  float lr = 1e-3f;
  double holdout_fraction = 0.1;
  int patience = 6;
  bool augment = true;
  std::uint64_t seed = 1;
};

struct BcTrainResult {
  BcNet net;
  std::vector<double> train_loss;
  std::vector<double> holdout_loss;
  int n_train = 0;
  int n_holdout = 0;
};

BcNet init_bc(const SacConfig& arch, std::uint64_t seed);
nn::Var bc_forward(BcNet& net, const nn::Var& images, const nn::Var& proprio);
std::array<float, kActionDim> bc_act(BcNet& net, const Observation& obs);
/// MSE regression of normalized demo actions on observations; keeps the best holdout epoch.
BcTrainResult bc_train(const std::vector<sim::Demonstration>& demos, const sim::WorldConfig& world,
                       const SacConfig& arch, const BcTrainConfig& config);
void save_bc(const BcNet& net, const std::string& path);
BcNet load_bc(const std::string& path, const SacConfig& arch);

class BcPolicy : public SkillPolicy {
 public:
  explicit BcPolicy(BcNet& net) : net_(net) {}
  void reset(const sim::WorldConfig&, const sim::WorldState&) override {}
  sim::Vec2 act(const sim::WorldConfig& config, const sim::WorldState& state) override;

 private:
  BcNet& net_;
};

/// Open-loop replay of one demonstration's end-effector displacements from the current pose.
class DemoReplayPolicy : public SkillPolicy {
 public:
  explicit DemoReplayPolicy(const sim::Demonstration& demo);
  /// Per-step displacements; each is commanded as displacement / dt.
  const std::vector<sim::Vec2>& displacements() const { return steps_; }
  void reset(const sim::WorldConfig&, const sim::WorldState&) override { index_ = 0; }
  sim::Vec2 act(const sim::WorldConfig& config, const sim::WorldState& state) override;
  bool failed() const override { return index_ > steps_.size(); }

 private:
  std::vector<sim::Vec2> steps_;
  std::size_t index_ = 0;
};

struct HeuristicConfig {
  double speed_fraction = 0.2;       // guarded-move speed as a fraction of v_max
  double contact_force = 0.05;       // N along +y that counts as touching a surface
  double max_descent = 0.12;         // m of free descent before giving up
  double sweep_pitch = 0.005;        // m added to the sweep amplitude per half cycle
  double sweep_radius = 0.05;        // m
  double dither_fraction = 0.05;     // lateral dither speed during insertion, fraction of v_max
  double lost_surface_drop = 0.005;  // m below the contact height that means the surface was lost
};

/// Force-guided search: descend to contact (a stalled descent without force fails), sweep outward along x while pressing down, then
/// insert with a small lateral dither.
class HeuristicPolicy : public SkillPolicy {
 public:
  enum class Phase { approach, sweep, insert, failed };

  explicit HeuristicPolicy(HeuristicConfig config = {}) : config_(config) {}
  void reset(const sim::WorldConfig& config, const sim::WorldState& state) override;
  sim::Vec2 act(const sim::WorldConfig& config, const sim::WorldState& state) override;
  bool failed() const override { return phase_ == Phase::failed; }
  Phase phase() const { return phase_; }

 private:
  HeuristicConfig config_;
  Phase phase_ = Phase::approach;
  sim::Vec2 start_;
  sim::Vec2 contact_;
  std::int64_t start_step_ = 0;
  int sweep_index_ = 0;
  int insert_steps_ = 0;
  std::array<bool, 2> edge_{};  // sweep sides that ran off the surface
  bool recovering_ = false;
  double prev_x_ = 0.0;
  double prev_cmd_x_ = 0.0;
};

}  // namespace ocskill::rl
