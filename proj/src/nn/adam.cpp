#include "ocskill/nn/adam.hpp"

#include <cmath>

#include "ocskill/errors.hpp"

namespace ocskill::nn {

void adam_step(ParameterSet& params, AdamState& state) {
  if (!params.any_grad_ready()) throw UsageError("adam_step called without populated gradients");
  const auto& cfg = state.config_;
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const float c1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
  const float c2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta2), t));

  for (auto& [name, p] : params.entries()) {
    if (!p.grad_ready) continue;
    auto [it, inserted] = state.moments_.try_emplace(name);
    auto& m = it->second;
    if (inserted) {
      m.first = Tensor::zeros(p.value.shape());
      m.second = Tensor::zeros(p.value.shape());
    } else if (m.first.shape() != p.value.shape()) {
      throw ConfigError("Adam moment shape mismatch for " + name);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float g = p.grad[i];
      m.first[i] = cfg.beta1 * m.first[i] + (1.0f - cfg.beta1) * g;
      m.second[i] = cfg.beta2 * m.second[i] + (1.0f - cfg.beta2) * g * g;
      const float mhat = m.first[i] / c1;
      const float vhat = m.second[i] / c2;
      p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace ocskill::nn
