#include "ocskill/nn/params.hpp"

#include <cmath>

#include "ocskill/errors.hpp"

namespace ocskill::nn {

Parameter& ParameterSet::add(const std::string& name, Tensor init) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  Parameter p;
  p.grad = Tensor::zeros(init.shape());
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParameterSet::numel() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, p] : params_) {
    p.grad.fill(0.0f);
    p.grad_ready = false;
  }
}

bool ParameterSet::any_grad_ready() const {
  for (const auto& [_, p] : params_) {
    if (p.grad_ready) return true;
  }
  return false;
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  for (const auto& [name, src] : other.params_) {
    auto it = params_.find(name);
    if (it == params_.end()) continue;
    if (it->second.value.shape() != src.value.shape()) throw ConfigError("shape mismatch copying " + name);
    it->second.value = src.value;
  }
}

void ParameterSet::polyak_update(const ParameterSet& source, float tau) {
  for (const auto& [name, src] : source.params_) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("polyak target lacks parameter " + name);
    auto& dst = it->second.value;
    if (dst.shape() != src.value.shape()) throw ConfigError("shape mismatch in polyak update for " + name);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = tau * src.value[i] + (1.0f - tau) * dst[i];
  }
}

bool ParameterSet::all_finite() const {
  for (const auto& [_, p] : params_) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

Tensor kaiming_uniform(Shape shape, int fan_in, std::mt19937_64& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(std::max(fan_in, 1)));
  std::uniform_real_distribution<float> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = dist(rng);
  return t;
}

}  // namespace ocskill::nn
