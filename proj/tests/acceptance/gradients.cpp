#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "../support/fd_oracle.hpp"
#include "../support/reference_nn.hpp"
#include "acceptance.hpp"
#include "ocskill/nn/layers.hpp"
#include "ocskill/ocgm/ocgm.hpp"
#include "ocskill/rl/sac.hpp"
#include "ocskill/transition/transition.hpp"

namespace acceptance {

using namespace ocskill;
using oracle::RefImage;
using oracle::RefParams;

namespace {

constexpr int kInstances = 20;
constexpr int kBatch = 2;
constexpr double kTolerance = 1e-4;
constexpr double kSlope = 0.01;

nn::Tensor uniform(nn::Shape shape, std::mt19937_64& rng, float lo, float hi) {
  nn::Tensor t(std::move(shape));
  std::uniform_real_distribution<float> u(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Fresh initialization plus non-zero biases, so each instance is a different point in parameter space.
void jitter_biases(nn::ParameterSet& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-0.1f, 0.1f);
  for (auto& [name, e] : p.entries())
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0)
      for (std::size_t i = 0; i < e.value.size(); ++i) e.value[i] = u(rng);
}

std::vector<double> as_double(const nn::Tensor& t) { return {t.values().begin(), t.values().end()}; }

RefImage ref_image(const nn::Tensor& t) {
  return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), as_double(t)};
}

RefImage ref_conv_stack(const RefParams& r, const std::string& prefix, RefImage h, const nn::ConvSpec& spec) {
  for (std::size_t i = 0; i < spec.filters.size(); ++i) {
    const std::string pre = prefix + ".l" + std::to_string(i);
    h = oracle::ref_conv(h, r.at(pre + ".w"), r.at(pre + ".b"), spec.filters[i], spec.kernel, spec.strides[i], spec.pad);
    oracle::ref_leaky(h.v, kSlope);
  }
  return h;
}

std::vector<double> ref_mlp(const RefParams& r, const std::string& prefix, std::vector<double> h, int n,
                            const std::vector<int>& widths) {
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::string pre = prefix + ".l" + std::to_string(i);
    h = oracle::ref_linear(h, n, widths[i], r.at(pre + ".w"), r.at(pre + ".b"), widths[i + 1]);
    if (i + 2 < widths.size()) oracle::ref_leaky(h, kSlope);
  }
  return h;
}

struct ArchResult {
  double worst = 0.0;
  int probes = 0;
};

ArchResult patch_encoder(std::mt19937_64& rng) {
  const nn::ConvSpec spec{3, {8, 16, 32}, {2, 2, 2}};
  const std::vector<int> fc{4 * 4 * 32, ocgm::kCodeDim};
  ArchResult out;
  for (int k = 0; k < kInstances; ++k) {
    nn::ParameterSet full;
    ocgm::init_patch_autoencoder(full, rng);
    nn::ParameterSet p;
    for (const auto& [name, e] : full.entries())
      if (name.rfind("enc.", 0) == 0) p.add(name, e.value);
    jitter_biases(p, rng);
    const auto x = uniform({kBatch, ocgm::kPatchSize, ocgm::kPatchSize, 3}, rng, 0.0f, 1.0f);
    const auto proj = uniform({kBatch, ocgm::kCodeDim}, rng, -1.0f, 1.0f);
    p.zero_grad();
    nn::backward(nn::sum(nn::mul(ocgm::patch_encoder_forward(p, nn::constant(x)), nn::constant(proj))));
    auto ref = [&](const RefParams& r) {
      const auto h = ref_conv_stack(r, "enc.conv", ref_image(x), spec);
      auto z = ref_mlp(r, "enc.fc", h.v, kBatch, fc);
      double s = 0.0;
      for (int i = 0; i < kBatch; ++i) {
        double n2 = 0.0;
        for (int c = 0; c < ocgm::kCodeDim; ++c) n2 += z[static_cast<std::size_t>(i * ocgm::kCodeDim + c)] * z[static_cast<std::size_t>(i * ocgm::kCodeDim + c)];
        for (int c = 0; c < ocgm::kCodeDim; ++c) {
          const auto j = static_cast<std::size_t>(i * ocgm::kCodeDim + c);
          s += z[j] / std::sqrt(n2) * proj[j];
        }
      }
      return s;
    };
    const auto g = oracle::finite_difference_check(p, ref, 8, rng, 1e-6);
    out.worst = std::max(out.worst, g.relative_error);
    out.probes += g.probes;
  }
  return out;
}

ArchResult transition_net(std::mt19937_64& rng) {
  const nn::ConvSpec spec{1, {8, 16, 32}, {2, 2, 2}};
  const std::vector<int> head{8 * 8 * 32, 128, 2};
  ArchResult out;
  for (int k = 0; k < kInstances; ++k) {
    nn::ParameterSet p;
    transition::init_transition_net(p, rng);
    jitter_biases(p, rng);
    const auto x = uniform({kBatch, 64, 64, 1}, rng, 0.0f, 1.0f);
    const auto y = uniform({kBatch, 2}, rng, -1.0f, 1.0f);
    p.zero_grad();
    nn::backward(nn::mean(nn::square(nn::sub(transition::transition_forward(p, nn::constant(x)), nn::constant(y)))));
    auto ref = [&](const RefParams& r) {
      const auto h = ref_conv_stack(r, "tr.conv", ref_image(x), spec);
      const auto o = ref_mlp(r, "tr.head", h.v, kBatch, head);
      double s = 0.0;
      for (std::size_t i = 0; i < o.size(); ++i) s += (o[i] - y[i]) * (o[i] - y[i]);
      return s / static_cast<double>(o.size());
    };
    const auto g = oracle::finite_difference_check(p, ref, 8, rng, 1e-6);
    out.worst = std::max(out.worst, g.relative_error);
    out.probes += g.probes;
  }
  return out;
}

ArchResult actor(std::mt19937_64& rng) {
  const rl::SacConfig cfg;
  const int in = cfg.latent + rl::kProprioDim;
  const std::vector<int> widths{in, cfg.hidden, cfg.hidden, 2 * rl::kActionDim};
  ArchResult out;
  for (int k = 0; k < kInstances; ++k) {
    nn::ParameterSet p;
    nn::init_mlp(p, "pi", widths, rng);
    jitter_biases(p, rng);
    const auto feat = uniform({kBatch, cfg.latent}, rng, -1.0f, 1.0f);
    const auto prop = uniform({kBatch, rl::kProprioDim}, rng, -1.0f, 1.0f);
    const auto eps = uniform({kBatch, rl::kActionDim}, rng, -1.5f, 1.5f);
    const auto proj = uniform({kBatch, rl::kActionDim}, rng, -1.0f, 1.0f);
    const float alpha = 0.3f;
    p.zero_grad();
    const auto s = rl::actor_forward(p, nn::constant(feat), nn::constant(prop), eps, cfg);
    nn::backward(nn::add(nn::scale(nn::sum(s.log_prob), alpha), nn::sum(nn::mul(s.action, nn::constant(proj)))));
    auto ref = [&](const RefParams& r) {
      std::vector<double> x;
      for (int i = 0; i < kBatch; ++i) {
        for (int c = 0; c < cfg.latent; ++c) x.push_back(feat.at(i, c));
        for (int c = 0; c < rl::kProprioDim; ++c) x.push_back(prop.at(i, c));
      }
      const auto o = ref_mlp(r, "pi", x, kBatch, widths);
      const double lo = cfg.log_std_min, hi = cfg.log_std_max;
      double total = 0.0;
      for (int i = 0; i < kBatch; ++i) {
        double logp = 0.0;
        for (int a = 0; a < rl::kActionDim; ++a) {
          const double mu = o[static_cast<std::size_t>(i * 2 * rl::kActionDim + a)];
          const double ls = lo + 0.5 * (hi - lo) * (std::tanh(o[static_cast<std::size_t>(i * 2 * rl::kActionDim + rl::kActionDim + a)]) + 1.0);
          const double e = eps.at(i, a);
          const double act = std::tanh(mu + std::exp(ls) * e);
          logp += -0.5 * e * e - ls - 0.5 * std::log(2.0 * M_PI) - std::log(1.0 - act * act + 1e-6);
          total += act * proj.at(i, a);
        }
        total += alpha * logp;
      }
      return total;
    };
    const auto g = oracle::finite_difference_check(p, ref, 16, rng, 1e-6);
    out.worst = std::max(out.worst, g.relative_error);
    out.probes += g.probes;
  }
  return out;
}

ArchResult critic(std::mt19937_64& rng) {
  const rl::SacConfig cfg;
  const auto spec = cfg.conv_spec();
  const std::vector<int> fc{cfg.flat_dim(), cfg.latent};
  const std::vector<int> qw{cfg.latent + rl::kProprioDim + rl::kActionDim, cfg.hidden, cfg.hidden, 1};
  ArchResult out;
  for (int k = 0; k < kInstances; ++k) {
    rl::SacAgent agent(cfg, rng());
    auto& p = agent.critic;
    jitter_biases(p, rng);
    const auto img = uniform({kBatch, cfg.image_size, cfg.image_size, spec.in_channels}, rng, 0.0f, 1.0f);
    const auto prop = uniform({kBatch, rl::kProprioDim}, rng, -1.0f, 1.0f);
    const auto act = uniform({kBatch, rl::kActionDim}, rng, -1.0f, 1.0f);
    const auto y = uniform({kBatch, 1}, rng, 0.0f, 1.0f);
    p.zero_grad();
    const auto feat = rl::encode(p, nn::constant(img), cfg);
    const auto [q1, q2] = rl::q_heads(p, feat, nn::constant(prop), nn::constant(act), cfg);
    nn::backward(nn::add(nn::mean(nn::square(nn::sub(q1, nn::constant(y)))),
                         nn::mean(nn::square(nn::sub(q2, nn::constant(y))))));
    auto ref = [&](const RefParams& r) {
      const auto h = ref_conv_stack(r, "enc.conv", ref_image(img), spec);
      auto z = ref_mlp(r, "enc.fc", h.v, kBatch, fc);
      oracle::ref_tanh(z);
      std::vector<double> in;
      for (int i = 0; i < kBatch; ++i) {
        for (int c = 0; c < cfg.latent; ++c) in.push_back(z[static_cast<std::size_t>(i * cfg.latent + c)]);
        for (int c = 0; c < rl::kProprioDim; ++c) in.push_back(prop.at(i, c));
        for (int c = 0; c < rl::kActionDim; ++c) in.push_back(act.at(i, c));
      }
      double s = 0.0;
      for (const char* head : {"q1", "q2"}) {
        const auto q = ref_mlp(r, head, in, kBatch, qw);
        for (int i = 0; i < kBatch; ++i) s += (q[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(i)]) * (q[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(i)]) / kBatch;
      }
      return s;
    };
    const auto g = oracle::finite_difference_check(p, ref, 8, rng, 1e-6);
    out.worst = std::max(out.worst, g.relative_error);
    out.probes += g.probes;
  }
  return out;
}

}  // namespace

Outcome gradient_correctness() {
  std::mt19937_64 rng(2024);
  const std::pair<const char*, ArchResult (*)(std::mt19937_64&)> archs[] = {
      {"encoder", patch_encoder}, {"transition", transition_net}, {"actor", actor}, {"critic", critic}};
  Outcome o;
  o.pass = true;
  for (const auto& [name, fn] : archs) {
    const auto r = fn(rng);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s%s max rel err %.2e over %d instances (%d probes)", o.detail.empty() ? "" : "; ", name,
                  r.worst, kInstances, r.probes);
    o.detail += buf;
    o.pass = o.pass && r.worst < kTolerance;
  }
  return o;
}

}  // namespace acceptance
