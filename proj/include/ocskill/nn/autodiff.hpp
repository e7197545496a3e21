#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ocskill/nn/params.hpp"
#include "ocskill/nn/tensor.hpp"

namespace ocskill::nn {

/// One value in a recorded computation. Built by the op functions below; the
/// tape is the parent graph reachable from the loss.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  Parameter* param = nullptr;
  bool requires_grad = false;

  Tensor& ensure_grad();
};

using Var = std::shared_ptr<Node>;

bool grad_enabled();

/// Disables tape recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Var constant(Tensor value);
/// Leaf bound to a parameter; backward() accumulates into its grad slot.
Var param(ParameterSet& params, const std::string& name);
/// Same value, cut from the tape.
Var detach(const Var& x);

/// Reverse-mode sweep from a scalar loss.
void backward(const Var& loss);

// Rank-2 ops. Shapes are [rows, cols].
Var matmul(const Var& a, const Var& b);
/// x [N, in] * w [in, out] + b [out]
Var linear(const Var& x, const Var& w, const Var& b);
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& x, int begin, int end);
/// [N, C] -> [N, 1]
Var sum_cols(const Var& x);
/// Each row divided by sqrt(|row|^2 + eps).
Var l2_normalize_rows(const Var& x, float eps = 1e-12f);

// Elementwise ops on equal shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);

/// x * s where s holds a single element.
Var mul_scalar_var(const Var& x, const Var& s);
Var scale(const Var& x, float k);
Var add_scalar(const Var& x, float k);

Var leaky_relu(const Var& x, float slope = 0.01f);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var square(const Var& x);
/// log(1 - tanh(x)^2 + eps), evaluated through sech^2 so it stays accurate when tanh saturates.
Var log_sech2(const Var& x, float eps);

/// Reductions to a single element.
Var sum(const Var& x);
Var mean(const Var& x);

Var reshape(const Var& x, Shape shape);

/// NHWC convolution, weights [kernel*kernel*Cin, Cout], zero padding `pad`.
Var conv2d(const Var& x, const Var& w, const Var& b, int kernel, int stride, int pad);

int conv_out_dim(int in, int kernel, int stride, int pad);

}  // namespace ocskill::nn
