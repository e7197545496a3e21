#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ocskill/errors.hpp"
#include "ocskill/nn/params.hpp"

namespace ocskill::nn {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamMoments {
  Tensor first;
  Tensor second;
};

class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {
    if (!(config_.lr > 0.0f)) throw ConfigError("Adam learning rate must be positive");
  }

  const AdamConfig& config() const { return config_; }
  std::int64_t step() const { return step_; }
  const std::map<std::string, AdamMoments>& moments() const { return moments_; }

 private:
  friend void adam_step(ParameterSet& params, AdamState& state);

  AdamConfig config_;
  std::int64_t step_ = 0;
  std::map<std::string, AdamMoments> moments_;
};

/// Bias-corrected Adam over every parameter whose gradient is ready. Throws
/// UsageError when no gradient was populated since the last zero_grad().
void adam_step(ParameterSet& params, AdamState& state);

}  // namespace ocskill::nn
