#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "../support/fd_oracle.hpp"
#include "../support/reference_nn.hpp"
#include "ocskill/errors.hpp"
#include "ocskill/nn/adam.hpp"
#include "ocskill/nn/autodiff.hpp"
#include "ocskill/nn/checkpoint.hpp"
#include "ocskill/nn/layers.hpp"

using namespace ocskill;
using namespace ocskill::nn;
using ocskill::oracle::RefImage;
using ocskill::oracle::RefParams;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = d(rng);
  return t;
}

}  // namespace

TEST(MlpForward, ZeroWeightsGiveZeroOutput) {
  std::mt19937_64 rng(1);
  ParameterSet p;
  const std::vector<int> widths{3, 4, 2};
  init_mlp(p, "m", widths, rng);
  for (auto& [_, par] : p.entries()) par.value.fill(0.0f);
  auto out = mlp_forward(p, "m", constant(random_tensor({5, 3}, rng)), widths, Activation::linear);
  ASSERT_EQ(out->value.shape(), (Shape{5, 2}));
  for (float v : out->value.values()) EXPECT_EQ(v, 0.0f);
}

TEST(MlpForward, IdentityWeightsPassInputThrough) {
  ParameterSet p;
  p.add("m.l0.w", Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  p.add("m.l0.b", Tensor::zeros({3}));
  const std::vector<int> widths{3, 3};
  Tensor x = Tensor::matrix(2, 3, {0.5f, -2.0f, 3.0f, 1.0f, 0.0f, -0.25f});
  auto out = mlp_forward(p, "m", constant(x), widths, Activation::linear);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(out->value[i], x[i]);
}

TEST(MlpForward, TwoLayerMatchesHandEvaluation) {
  // h = leaky([1, 2] W0 + b0), y = h W1 + b1 evaluated by hand:
  // W0 = [[1, -1], [0.5, 2]], b0 = [0, -6] -> pre = [2, -3], h = [2, -0.03]
  // W1 = [[1, 2], [3, 4]], b1 = [0.5, 0] -> y = [2.41, 3.88]
  ParameterSet p;
  p.add("m.l0.w", Tensor::matrix(2, 2, {1, -1, 0.5f, 2}));
  p.add("m.l0.b", Tensor({2}, std::vector<float>{0, -6}));
  p.add("m.l1.w", Tensor::matrix(2, 2, {1, 2, 3, 4}));
  p.add("m.l1.b", Tensor({2}, std::vector<float>{0.5f, 0}));
  const std::vector<int> widths{2, 2, 2};
  auto out = mlp_forward(p, "m", constant(Tensor::matrix(1, 2, {1, 2})), widths, Activation::leaky_relu);
  EXPECT_NEAR(out->value[0], 2.41f, 1e-6);
  EXPECT_NEAR(out->value[1], 3.88f, 1e-6);
}

TEST(MlpForward, ShapeMismatchIsConfigError) {
  std::mt19937_64 rng(2);
  ParameterSet p;
  const std::vector<int> widths{3, 2};
  init_mlp(p, "m", widths, rng);
  EXPECT_THROW(mlp_forward(p, "m", constant(Tensor::zeros({1, 4})), widths, Activation::linear), ConfigError);
  const std::vector<int> empty{};
  EXPECT_THROW(mlp_forward(p, "m", constant(Tensor::zeros({1, 3})), empty, Activation::linear), ConfigError);
}

TEST(Conv2dForward, ZeroFiltersGiveZeroMap) {
  std::mt19937_64 rng(3);
  ConvSpec spec{1, {4, 8}, {2, 2}, 3, 1};
  ParameterSet p;
  init_conv_stack(p, "c", spec, rng);
  for (auto& [_, par] : p.entries()) par.value.fill(0.0f);
  auto out = conv2d_forward(p, "c", constant(random_tensor({2, 16, 16, 1}, rng)), spec, Activation::leaky_relu);
  ASSERT_EQ(out->value.shape(), (Shape{2, 4, 4, 8}));
  for (float v : out->value.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2dForward, CenterTapOnConstantImageIsConstant) {
  ConvSpec spec{1, {1}, {2}, 3, 1};
  ParameterSet p;
  Tensor w({9, 1}, 0.0f);
  w[4] = 1.0f;
  p.add("c.l0.w", w);
  p.add("c.l0.b", Tensor::zeros({1}));
  auto out = conv2d_forward(p, "c", constant(Tensor({1, 10, 10, 1}, 0.7f)), spec, Activation::linear);
  ASSERT_EQ(out->value.shape(), (Shape{1, 5, 5, 1}));
  for (float v : out->value.values()) EXPECT_FLOAT_EQ(v, 0.7f);
}

TEST(Conv2dForward, MatchesSlidingWindowOracle) {
  std::mt19937_64 rng(4);
  ConvSpec spec{1, {1}, {2}, 3, 1};
  ParameterSet p;
  init_conv_stack(p, "c", spec, rng);
  p.get("c.l0.b").value[0] = 0.3f;
  Tensor img = random_tensor({1, 8, 8, 1}, rng);
  auto out = conv2d_forward(p, "c", constant(img), spec, Activation::linear);

  RefImage ref{1, 8, 8, 1, std::vector<double>(img.values().begin(), img.values().end())};
  auto w = std::vector<double>(p.get("c.l0.w").value.values().begin(), p.get("c.l0.w").value.values().end());
  auto expected = oracle::ref_conv(ref, w, {0.3}, 1, 3, 2, 1);
  ASSERT_EQ(out->value.size(), expected.v.size());
  ASSERT_EQ(out->value.dim(1), 4);
  for (std::size_t i = 0; i < expected.v.size(); ++i) EXPECT_NEAR(out->value[i], expected.v[i], 1e-5);
}

TEST(Conv2dForward, IncompatibleDimsAreConfigErrors) {
  std::mt19937_64 rng(5);
  ConvSpec spec{3, {4}, {2}, 3, 1};
  ParameterSet p;
  init_conv_stack(p, "c", spec, rng);
  EXPECT_THROW(conv2d_forward(p, "c", constant(Tensor::zeros({1, 8, 8, 1})), spec, Activation::linear), ConfigError);
  ConvSpec tiny{1, {2}, {1}, 5, 0};
  ParameterSet q;
  init_conv_stack(q, "c", tiny, rng);
  EXPECT_THROW(conv2d_forward(q, "c", constant(Tensor::zeros({1, 3, 3, 1})), tiny, Activation::linear), ConfigError);
}

TEST(Backward, SumOfParametersHasUnitGradient) {
  ParameterSet p;
  p.add("a", Tensor({2, 3}, 0.5f));
  p.add("b", Tensor({4}, -1.0f));
  p.zero_grad();
  backward(add(sum(param(p, "a")), sum(param(p, "b"))));
  for (const auto& [_, par] : p.entries()) {
    EXPECT_TRUE(par.grad_ready);
    for (float g : par.grad.values()) EXPECT_EQ(g, 1.0f);
  }
}

TEST(Backward, DisconnectedParameterHasZeroGradient) {
  ParameterSet p;
  p.add("used", Tensor({3}, 2.0f));
  p.add("unused", Tensor({3}, 2.0f));
  p.zero_grad();
  backward(sum(square(param(p, "used"))));
  for (float g : p.get("unused").grad.values()) EXPECT_EQ(g, 0.0f);
  EXPECT_FALSE(p.get("unused").grad_ready);
  for (float g : p.get("used").grad.values()) EXPECT_FLOAT_EQ(g, 4.0f);
}

TEST(Backward, NonScalarLossIsUsageError) {
  ParameterSet p;
  p.add("a", Tensor({3}, 1.0f));
  EXPECT_THROW(backward(param(p, "a")), UsageError);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  ParameterSet p;
  p.add("a", Tensor({3}, 1.0f));
  NoGradGuard guard;
  auto y = sum(square(param(p, "a")));
  EXPECT_FALSE(y->requires_grad);
  EXPECT_TRUE(y->parents.empty());
}

TEST(Backward, MlpGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    ParameterSet p;
    const std::vector<int> widths{3, 6, 5, 2};
    init_mlp(p, "m", widths, rng);
    Tensor x = random_tensor({4, 3}, rng);
    Tensor proj = random_tensor({4, 2}, rng);
    p.zero_grad();
    backward(sum(mul(mlp_forward(p, "m", constant(x), widths, Activation::leaky_relu), constant(proj))));

    auto ref_loss = [&](const RefParams& r) {
      std::vector<double> h(x.values().begin(), x.values().end());
      int in = 3;
      for (int l = 0; l < 3; ++l) {
        const std::string pre = "m.l" + std::to_string(l);
        h = oracle::ref_linear(h, 4, in, r.at(pre + ".w"), r.at(pre + ".b"), widths[l + 1]);
        if (l < 2) oracle::ref_leaky(h);
        in = widths[l + 1];
      }
      double s = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * proj[i];
      return s;
    };
    auto check = oracle::finite_difference_check(p, ref_loss, 1000, rng);
    EXPECT_LT(check.relative_error, 1e-4) << "trial " << trial;
  }
}

TEST(Backward, ConvGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    ConvSpec spec{2, {3, 4}, {2, 2}, 3, 1};
    ParameterSet p;
    init_conv_stack(p, "c", spec, rng);
    Tensor img = random_tensor({2, 9, 9, 2}, rng, 0.0f, 1.0f);
    auto out = conv2d_forward(p, "c", constant(img), spec, Activation::tanh);
    Tensor proj = random_tensor(out->value.shape(), rng);
    p.zero_grad();
    backward(sum(mul(out, constant(proj))));

    auto ref_loss = [&](const RefParams& r) {
      RefImage h{2, 9, 9, 2, std::vector<double>(img.values().begin(), img.values().end())};
      for (int l = 0; l < 2; ++l) {
        const std::string pre = "c.l" + std::to_string(l);
        h = oracle::ref_conv(h, r.at(pre + ".w"), r.at(pre + ".b"), spec.filters[static_cast<std::size_t>(l)], 3, 2, 1);
        oracle::ref_tanh(h.v);
      }
      double s = 0.0;
      for (std::size_t i = 0; i < h.v.size(); ++i) s += h.v[i] * proj[i];
      return s;
    };
    auto check = oracle::finite_difference_check(p, ref_loss, 1000, rng);
    EXPECT_LT(check.relative_error, 1e-4) << "trial " << trial;
  }
}

TEST(Backward, ElementwiseOpsMatchFiniteDifferences) {
  // Exercises the ops used by the SAC losses: exp, log, sigmoid, minimum,
  // slice/concat, sum_cols and scalar-variable scaling.
  std::mt19937_64 rng(8);
  ParameterSet p;
  p.add("a", random_tensor({3, 4}, rng, 0.5f, 1.5f));
  p.add("b", random_tensor({3, 4}, rng, 0.5f, 1.5f));
  p.add("s", Tensor::scalar(0.7f));
  p.zero_grad();
  auto a = param(p, "a"), b = param(p, "b"), s = param(p, "s");
  auto m = minimum(exp(a), add_scalar(scale(b, 2.0f), 0.1f));
  auto cat = concat_cols(slice_cols(m, 0, 2), log(sigmoid(b)));
  auto loss = sum(mul_scalar_var(sum_cols(cat), s));
  backward(loss);
  auto ref_loss = [](const RefParams& r) {
    double total = 0.0;
    for (int row = 0; row < 3; ++row) {
      double acc = 0.0;
      for (int c = 0; c < 2; ++c) {
        const auto i = static_cast<std::size_t>(row * 4 + c);
        acc += std::min(std::exp(r.at("a")[i]), 2.0 * r.at("b")[i] + 0.1);
      }
      for (int c = 0; c < 4; ++c) {
        const auto i = static_cast<std::size_t>(row * 4 + c);
        acc += std::log(1.0 / (1.0 + std::exp(-r.at("b")[i])));
      }
      total += acc * r.at("s")[0];
    }
    return total;
  };
  auto check = oracle::finite_difference_check(p, ref_loss, 100, rng);
  EXPECT_LT(check.relative_error, 1e-4);
}

TEST(Backward, LogSech2MatchesDirectFormulaIncludingSaturation) {
  std::mt19937_64 rng(12);
  ParameterSet p;
  p.add("x", random_tensor({4, 5}, rng, -9.0f, 9.0f));
  p.zero_grad();
  const auto y = log_sech2(param(p, "x"), 1e-6f);
  for (std::size_t i = 0; i < y->value.size(); ++i) {
    const double t = std::tanh(static_cast<double>(p.get("x").value[i]));
    EXPECT_NEAR(y->value[i], std::log(1.0 - t * t + 1e-6), 1e-5);
  }
  backward(sum(y));
  auto ref_loss = [](const RefParams& r) {
    double total = 0.0;
    for (double v : r.at("x")) total += std::log(1.0 - std::tanh(v) * std::tanh(v) + 1e-6);
    return total;
  };
  EXPECT_LT(oracle::finite_difference_check(p, ref_loss, 20, rng).relative_error, 1e-4);
}

TEST(Backward, RowNormalizationMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  ParameterSet p;
  p.add("a", random_tensor({4, 5}, rng));
  const Tensor weights = random_tensor({4, 5}, rng);
  p.zero_grad();
  auto out = l2_normalize_rows(param(p, "a"));
  for (int r = 0; r < 4; ++r) {
    double n2 = 0.0;
    for (int c = 0; c < 5; ++c) n2 += out->value.at(r, c) * out->value.at(r, c);
    EXPECT_NEAR(n2, 1.0, 1e-5);
  }
  backward(sum(mul(out, constant(weights))));
  auto ref_loss = [&weights](const RefParams& r) {
    const auto& a = r.at("a");
    double total = 0.0;
    for (int row = 0; row < 4; ++row) {
      double n2 = 0.0;
      for (int c = 0; c < 5; ++c) n2 += a[static_cast<std::size_t>(row * 5 + c)] * a[static_cast<std::size_t>(row * 5 + c)];
      for (int c = 0; c < 5; ++c) {
        const auto i = static_cast<std::size_t>(row * 5 + c);
        total += a[i] / std::sqrt(n2) * weights[i];
      }
    }
    return total;
  };
  EXPECT_LT(oracle::finite_difference_check(p, ref_loss, 100, rng).relative_error, 1e-4);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet p;
  p.add("w", Tensor({3}, 1.5f));
  AdamState st;
  p.zero_grad();
  backward(scale(sum(param(p, "w")), 0.0f));
  adam_step(p, st);
  EXPECT_EQ(st.step(), 1);
  for (float v : p.get("w").value.values()) EXPECT_EQ(v, 1.5f);
}

TEST(Adam, ConstantGradientMovesAgainstSign) {
  ParameterSet p;
  p.add("w", Tensor::scalar(0.0f));
  AdamState st;
  float prev = 0.0f;
  for (int i = 0; i < 50; ++i) {
    p.zero_grad();
    backward(scale(sum(param(p, "w")), 3.0f));  // gradient +3
    adam_step(p, st);
    const float now = p.get("w").value[0];
    EXPECT_LT(now, prev);
    prev = now;
  }
  EXPECT_EQ(st.step(), 50);
}

TEST(Adam, SingleStepMatchesClosedForm) {
  // m1 = (1-b1) g, v1 = (1-b2) g^2, mhat = g, vhat = g^2 -> x1 = x0 - lr * g / (|g| + eps)
  ParameterSet p;
  p.add("w", Tensor::scalar(2.0f));
  AdamState st(AdamConfig{0.01f, 0.9f, 0.999f, 1e-8f});
  p.zero_grad();
  backward(scale(sum(param(p, "w")), -0.25f));
  adam_step(p, st);
  const double expected = 2.0 - 0.01 * (-0.25) / (0.25 + 1e-8);
  EXPECT_NEAR(p.get("w").value[0], expected, 1e-6);
}

TEST(Adam, MissingGradientsIsUsageError) {
  ParameterSet p;
  p.add("w", Tensor::scalar(1.0f));
  AdamState st;
  p.zero_grad();
  EXPECT_THROW(adam_step(p, st), UsageError);
}

TEST(Checkpoint, RoundTripPreservesEveryParameter) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    ParameterSet p;
    const int count = 1 + static_cast<int>(rng() % 5);
    for (int i = 0; i < count; ++i) {
      Shape s;
      const int rank = 1 + static_cast<int>(rng() % 4);
      for (int d = 0; d < rank; ++d) s.push_back(1 + static_cast<int>(rng() % 5));
      p.add("layer/" + std::to_string(i), random_tensor(s, rng));
    }
    std::stringstream buf;
    write_checkpoint(buf, p);
    auto q = read_checkpoint(buf);
    ASSERT_EQ(q.count(), p.count());
    for (const auto& [name, par] : p.entries()) {
      EXPECT_EQ(q.get(name).value.shape(), par.value.shape());
      EXPECT_EQ(q.get(name).value.storage(), par.value.storage());
    }
  }
}

TEST(Checkpoint, HeaderLayoutIsExact) {
  ParameterSet p;
  p.add("ab", Tensor({2}, std::vector<float>{1.0f, -2.0f}));
  std::stringstream buf;
  write_checkpoint(buf, p);
  const std::string bytes = buf.str();
  ASSERT_EQ(bytes.size(), 4u + 4u + 4u + 2u + 4u + 4u + 8u);
  EXPECT_EQ(bytes.substr(0, 4), "NNC1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);
  EXPECT_EQ(bytes.substr(12, 2), "ab");
}

TEST(Checkpoint, RejectsForeignBytes) {
  std::stringstream buf("NOPE\x01\x00\x00\x00");
  EXPECT_THROW(read_checkpoint(buf), IoError);
  std::stringstream truncated(std::string("NNC1\x01\x00\x00\x00\x03\x00\x00\x00", 12) + "ab");
  EXPECT_THROW(read_checkpoint(truncated), IoError);
}

TEST(Forward, DeterministicAndFiniteForBoundedParameters) {
  std::mt19937_64 rng(10);
  ConvSpec spec{1, {8, 16}, {2, 2}, 3, 1};
  ParameterSet p;
  init_conv_stack(p, "c", spec, rng);
  for (auto& [_, par] : p.entries())
    for (auto& v : par.value.storage()) v = std::uniform_real_distribution<float>(-1e3f, 1e3f)(rng);
  Tensor img = random_tensor({1, 16, 16, 1}, rng, 0.0f, 1.0f);
  auto a = conv2d_forward(p, "c", constant(img), spec, Activation::tanh);
  auto b = conv2d_forward(p, "c", constant(img), spec, Activation::tanh);
  EXPECT_EQ(a->value.storage(), b->value.storage());
  EXPECT_TRUE(a->value.all_finite());
}
