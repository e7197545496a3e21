#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "ocskill/nn/tensor.hpp"

namespace ocskill::nn {

struct Parameter {
  Tensor value;
  Tensor grad;
  // Set by backward() when the parameter was reachable from the loss.
  bool grad_ready = false;
};

/// Named network weights with gradient slots of identical shape.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Tensor init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, Parameter>& entries() { return params_; }
  const std::map<std::string, Parameter>& entries() const { return params_; }
  std::size_t count() const { return params_.size(); }
  std::size_t numel() const;

  void zero_grad();
  bool any_grad_ready() const;

  /// Overwrites values of every parameter in `other` that exists here.
  void copy_values_from(const ParameterSet& other);
  /// this <- tau * source + (1 - tau) * this, over the parameters of `source`.
  void polyak_update(const ParameterSet& source, float tau);

  bool all_finite() const;

 private:
  std::map<std::string, Parameter> params_;
};

/// Uniform(-b, b) with b = sqrt(6 / fan_in).
Tensor kaiming_uniform(Shape shape, int fan_in, std::mt19937_64& rng);

}  // namespace ocskill::nn
