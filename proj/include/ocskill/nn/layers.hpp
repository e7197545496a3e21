#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "ocskill/nn/autodiff.hpp"

namespace ocskill::nn {

enum class Activation { leaky_relu, tanh, linear };

inline constexpr float kLeakySlope = 0.01f;

Var activate(const Var& x, Activation act);

/// Creates `<prefix>.l<i>.w` / `.b` for a dense chain. `widths` includes the
/// input width: {in, hidden..., out}.
void init_mlp(ParameterSet& params, const std::string& prefix, std::span<const int> widths, std::mt19937_64& rng);

/// Dense chain; `act` between layers, final layer linear.
Var mlp_forward(ParameterSet& params, const std::string& prefix, const Var& input, std::span<const int> widths,
                Activation act);

struct ConvSpec {
  int in_channels = 1;
  std::vector<int> filters;
  std::vector<int> strides;
  int kernel = 3;
  int pad = 1;
};

void init_conv_stack(ParameterSet& params, const std::string& prefix, const ConvSpec& spec, std::mt19937_64& rng);

/// Conv chain over an NHWC batch with `act` after every layer.
Var conv2d_forward(ParameterSet& params, const std::string& prefix, const Var& image, const ConvSpec& spec,
                   Activation act);

/// {H, W, C} after the conv chain.
std::vector<int> conv_stack_output_hwc(const ConvSpec& spec, int height, int width);

}  // namespace ocskill::nn
