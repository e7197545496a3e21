#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocskill/nn/autodiff.hpp"
#include "ocskill/nn/params.hpp"
#include "ocskill/sim/demo.hpp"

namespace ocskill::transition {

inline constexpr double kOffsetBound = 0.05;

struct TransitionSample {
  sim::Image wrist;
  sim::Vec2 offset;  // skill start pose minus current pose
};

struct CollectConfig {
  int n_trajectories = 100;
  int steps_per_trajectory = 15;
  double offset_bound = kOffsetBound;
  int max_obstacles = 3;
};

/// One record per trajectory; frames hold wrist images and poses, `reference` is the skill start pose.
std::vector<sim::Demonstration> collect_transition_dataset(const sim::WorldConfig& config, sim::SocketVariant task,
                                                           std::uint64_t seed, const CollectConfig& collect = {});
std::vector<TransitionSample> transition_samples(const std::vector<sim::Demonstration>& records);

struct TransitionNet {
  nn::ParameterSet params;
  double offset_scale = kOffsetBound;
};

void init_transition_net(nn::ParameterSet& params, std::mt19937_64& rng);
/// Wrist batch [N, 64, 64, 1] in [0, 1] to normalized offsets [N, 2].
nn::Var transition_forward(nn::ParameterSet& params, const nn::Var& images);
nn::Tensor wrist_tensor(const std::vector<const sim::Image*>& images);

/// Clamped to the offset bound on each axis.
sim::Vec2 predict_offset(TransitionNet& net, const sim::Image& wrist);

struct TransitionTrainConfig {
  int max_epochs = 60;
  int batch = 32;
  float lr = 1e-3f;
  double holdout_fraction = 0.1;
  int patience = 8;
  double min_improvement = 0.01;
  std::uint64_t seed = 1;
};

struct TransitionTrainResult {
  TransitionNet net;
  std::vector<double> train_loss;
  std::vector<double> holdout_loss;
  double holdout_median_error = 0.0;  // Euclidean, meters
  int n_train = 0;
  int n_holdout = 0;
};

TransitionTrainResult train_transition(const std::vector<TransitionSample>& samples,
                                       const TransitionTrainConfig& config = {});

struct TransitionOutcome {
  sim::WorldState state;
  sim::Vec2 predicted;
  bool contact = false;
  int steps = 0;
};

/// Predicts from the current wrist view and moves in a straight line at `speed_fraction` of v_max.
/// Contact is recorded; the move is not aborted.
TransitionOutcome apply_transition(TransitionNet& net, const sim::WorldConfig& config, const sim::WorldState& state,
                                   double speed_fraction = 0.5);

void save_transition(const TransitionNet& net, const std::string& path);
TransitionNet load_transition(const std::string& path);

}  // namespace ocskill::transition
