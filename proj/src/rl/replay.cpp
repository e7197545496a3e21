#include "ocskill/rl/replay.hpp"

#include "ocskill/errors.hpp"

namespace ocskill::rl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
  data_.reserve(capacity);
}

void ReplayBuffer::add(Transition t) {
  std::size_t slot;
  if (data_.size() < capacity_) {
    slot = data_.size();
    data_.push_back(std::move(t));
  } else {
    auto& victims = agent_order_.empty() ? demo_order_ : agent_order_;
    slot = victims.front();
    victims.pop_front();
    data_[slot] = std::move(t);
  }
  (data_[slot].demo ? demo_order_ : agent_order_).push_back(slot);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, std::mt19937_64& rng) const {
  if (data_.empty()) throw UsageError("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = pick(rng);
  return out;
}

void seed_replay_with_demos(ReplayBuffer& buffer, const std::vector<sim::Demonstration>& demos,
                            const sim::WorldConfig& config, ObsKind kind) {
  if (demos.empty()) throw ConfigError("no demonstrations to seed the replay buffer");
  for (const auto& d : demos) {
    if (d.frames.size() < 2) continue;
    Observation cur = frame_observation(config, d.frames[0], kind);
    for (std::size_t t = 0; t + 1 < d.frames.size(); ++t) {
      Observation next = frame_observation(config, d.frames[t + 1], kind);
      Transition tr;
      tr.action = from_velocity(config, d.frames[t].action);
      const bool last = t + 2 == d.frames.size();
      tr.done = last && d.success;
      tr.reward = tr.done ? 1.0f : 0.0f;
      tr.demo = true;
      tr.obs = std::move(cur);
      tr.next_obs = next;
      buffer.add(std::move(tr));
      cur = std::move(next);
    }
  }
}

}  // namespace ocskill::rl
