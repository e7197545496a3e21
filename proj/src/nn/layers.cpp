#include "ocskill/nn/layers.hpp"

#include "ocskill/errors.hpp"

namespace ocskill::nn {
namespace {

std::string layer_name(const std::string& prefix, std::size_t i, const char* what) {
  return prefix + ".l" + std::to_string(i) + "." + what;
}

}  // namespace

Var activate(const Var& x, Activation act) {
  switch (act) {
    case Activation::leaky_relu:
      return leaky_relu(x, kLeakySlope);
    case Activation::tanh:
      return tanh(x);
    case Activation::linear:
      return x;
  }
  return x;
}

void init_mlp(ParameterSet& params, const std::string& prefix, std::span<const int> widths, std::mt19937_64& rng) {
  if (widths.size() < 2) throw ConfigError("mlp needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    params.add(layer_name(prefix, i, "w"), kaiming_uniform({widths[i], widths[i + 1]}, widths[i], rng));
    params.add(layer_name(prefix, i, "b"), Tensor::zeros({widths[i + 1]}));
  }
}

Var mlp_forward(ParameterSet& params, const std::string& prefix, const Var& input, std::span<const int> widths,
                Activation act) {
  if (widths.size() < 2) throw ConfigError("mlp_forward: layer_spec needs input and output widths");
  if (input->value.rank() != 2 || input->value.dim(1) != widths[0]) {
    throw ConfigError("mlp_forward: input " + shape_str(input->value.shape()) + " does not match width " +
                      std::to_string(widths[0]));
  }
  Var h = input;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    h = linear(h, param(params, layer_name(prefix, i, "w")), param(params, layer_name(prefix, i, "b")));
    if (i + 2 < widths.size()) h = activate(h, act);
  }
  return h;
}

void init_conv_stack(ParameterSet& params, const std::string& prefix, const ConvSpec& spec, std::mt19937_64& rng) {
  if (spec.filters.size() != spec.strides.size() || spec.filters.empty()) {
    throw ConfigError("conv stack: filters and strides must be non-empty and equally long");
  }
  int c = spec.in_channels;
  for (std::size_t i = 0; i < spec.filters.size(); ++i) {
    const int fan_in = spec.kernel * spec.kernel * c;
    params.add(layer_name(prefix, i, "w"), kaiming_uniform({fan_in, spec.filters[i]}, fan_in, rng));
    params.add(layer_name(prefix, i, "b"), Tensor::zeros({spec.filters[i]}));
    c = spec.filters[i];
  }
}

Var conv2d_forward(ParameterSet& params, const std::string& prefix, const Var& image, const ConvSpec& spec,
                   Activation act) {
  if (image->value.rank() != 4 || image->value.dim(3) != spec.in_channels) {
    throw ConfigError("conv2d_forward: image " + shape_str(image->value.shape()) + " does not have " +
                      std::to_string(spec.in_channels) + " channels");
  }
  Var h = image;
  for (std::size_t i = 0; i < spec.filters.size(); ++i) {
    h = conv2d(h, param(params, layer_name(prefix, i, "w")), param(params, layer_name(prefix, i, "b")), spec.kernel,
               spec.strides[i], spec.pad);
    h = activate(h, act);
  }
  return h;
}

std::vector<int> conv_stack_output_hwc(const ConvSpec& spec, int height, int width) {
  int h = height, w = width;
  for (int s : spec.strides) {
    h = conv_out_dim(h, spec.kernel, s, spec.pad);
    w = conv_out_dim(w, spec.kernel, s, spec.pad);
    if (h < 1 || w < 1) throw ConfigError("conv stack reduces image below one pixel");
  }
  return {h, w, spec.filters.back()};
}

}  // namespace ocskill::nn
