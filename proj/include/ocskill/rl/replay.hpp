#pragma once

#include <cstddef>
#include <deque>
#include <random>
#include <vector>

#include "ocskill/rl/env.hpp"

namespace ocskill::rl {

struct Transition {
  Observation obs;
  std::array<float, kActionDim> action{};  // normalized to [-1, 1]
  float reward = 0.0f;
  Observation next_obs;
  bool done = false;
  bool demo = false;
};

/// FIFO buffer in which demonstration transitions are evicted only once no
/// agent transition is left.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t demo_count() const { return demo_order_.size(); }
  const Transition& at(std::size_t i) const { return data_.at(i); }
  /// Uniform indices with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> data_;
  std::deque<std::size_t> demo_order_;
  std::deque<std::size_t> agent_order_;
};

/// Inserts every consecutive frame pair of every demo; successful demos end with reward 1 and done.
void seed_replay_with_demos(ReplayBuffer& buffer, const std::vector<sim::Demonstration>& demos,
                            const sim::WorldConfig& config, ObsKind kind);

}  // namespace ocskill::rl
