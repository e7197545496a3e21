#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "ocskill/errors.hpp"
#include "ocskill/rl/baselines.hpp"
#include "ocskill/rl/replay.hpp"
#include "ocskill/rl/sac.hpp"

using namespace ocskill;
using namespace ocskill::rl;
using sim::Vec2;

namespace {

const sim::WorldConfig kCfg{};

sim::WorldState at_goal(sim::SocketVariant v) {
  auto s = sim::reset_scene(kCfg, 3, v, 0);
  s.ee_pos = sim::goal_pose(kCfg, s.target());
  s.insertion_depth = sim::required_depth(s.target());
  return s;
}

Observation flat_obs(int size, std::uint8_t value, float prop = 0.0f) {
  Observation o;
  o.image = sim::Image(size, size, 1, value);
  o.proprio.fill(prop);
  return o;
}

SacConfig small_config() {
  SacConfig c;
  c.image_size = 16;
  c.filters = {4, 8};
  c.strides = {2, 2};
  c.latent = 8;
  c.hidden = 32;
  c.batch = 32;
  c.augment = false;
  return c;
}

ReplayBuffer bandit_buffer(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> ua(-1.0f, 1.0f), u01(0.0f, 1.0f);
  ReplayBuffer b(1000);
  for (int i = 0; i < 600; ++i) {
    const bool bright = i % 2;
    const float p = bright ? 0.8f : 0.3f;
    Transition t;
    t.obs = flat_obs(16, bright ? 200 : 20);
    t.next_obs = t.obs;
    t.action = {ua(rng), ua(rng)};
    t.reward = u01(rng) < p ? 1.0f : 0.0f;
    t.done = true;
    b.add(std::move(t));
  }
  return b;
}

std::vector<sim::Demonstration> skill_demos(sim::SocketVariant v, int n, std::uint64_t seed0) {
  std::vector<sim::Demonstration> d;
  for (int i = 0; i < n; ++i) d.push_back(sim::oracle_demo(kCfg, seed0 + i, v, sim::DemoScope::limited_task_space));
  return d;
}

bool same_values(const nn::ParameterSet& a, const nn::ParameterSet& b) {
  if (a.count() != b.count()) return false;
  for (const auto& [name, p] : a.entries()) {
    const auto& q = b.get(name).value;
    for (std::size_t i = 0; i < p.value.size(); ++i)
      if (p.value[i] != q[i]) return false;
  }
  return true;
}

sim::WorldState heuristic_start(double offset) {
  auto s = sim::reset_scene(kCfg, 11, sim::SocketVariant::Emodel, 0);
  s.ee_pos = sim::rl_start_pose(kCfg, s.target()) + Vec2{offset, 0.0};
  return s;
}

}  // namespace

TEST(Reward, InsertedAtGoalIsOne) {
  EXPECT_EQ(sparse_reward(at_goal(sim::SocketVariant::RJ45), goal_region(kCfg, at_goal(sim::SocketVariant::RJ45).target())), 1.0);
}

TEST(Reward, JustOutsideToleranceIsZero) {
  auto s = at_goal(sim::SocketVariant::RJ45);
  const auto g = goal_region(kCfg, s.target());
  ASSERT_DOUBLE_EQ(g.tolerance, 0.010);
  s.ee_pos.x += 0.011;
  EXPECT_EQ(sparse_reward(s, g), 0.0);
}

TEST(Reward, IndicatorFlipsExactlyAtTolerance) {
  for (auto v : {sim::SocketVariant::VGA, sim::SocketVariant::USBA}) {
    const auto base = at_goal(v);
    const auto g = goal_region(kCfg, base.target());
    for (double angle : {0.0, 0.7, 2.0, 3.14159}) {
      const Vec2 dir{std::cos(angle), std::sin(angle)};
      double lo = 0.0, hi = 0.05;
      for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        auto s = base;
        s.ee_pos = g.pose + dir * mid;
        (sparse_reward(s, g) > 0.0 ? lo : hi) = mid;
      }
      EXPECT_NEAR(lo, g.tolerance, 1e-12);
    }
  }
}

TEST(Reward, DepthBelowRequiredIsZero) {
  auto s = at_goal(sim::SocketVariant::Emodel);
  s.insertion_depth = 0.5 * sim::required_depth(s.target());
  EXPECT_EQ(sparse_reward(s, goal_region(kCfg, s.target())), 0.0);
}

TEST(Reward, ToleranceIsOneOfTheVariantValues) {
  for (auto v : {sim::SocketVariant::VGA, sim::SocketVariant::RJ45, sim::SocketVariant::Emodel, sim::SocketVariant::USBA}) {
    const double tol = goal_region(kCfg, at_goal(v).target()).tolerance;
    EXPECT_TRUE(tol == 0.008 || tol == 0.010) << tol;
  }
}

TEST(Reward, CollisionPenaltyValues) {
  auto s = at_goal(sim::SocketVariant::USBA);
  const auto g = goal_region(kCfg, s.target());
  EXPECT_DOUBLE_EQ(collision_penalty_reward(s, g), 1.0);
  s.obstacle_contact = true;
  EXPECT_DOUBLE_EQ(collision_penalty_reward(s, g), 0.995);
  s.ee_pos.y += 0.2;
  EXPECT_DOUBLE_EQ(collision_penalty_reward(s, g), -0.005);
  s.obstacle_contact = false;
  EXPECT_DOUBLE_EQ(collision_penalty_reward(s, g), 0.0);
}

TEST(Reward, CodomainOverRandomRollouts) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::set<double> scratch{-0.005, 0.0, 0.995, 1.0};
  for (int e = 0; e < 20; ++e) {
    auto s = sim::reset_scene(kCfg, 100 + e, sim::SocketVariant::VGA, 4);
    const auto g = goal_region(kCfg, s.target());
    for (int t = 0; t < 200; ++t) {
      s = sim::step(kCfg, s, {u(rng) * kCfg.v_max, u(rng) * kCfg.v_max}, kCfg.dt);
      const double r = sparse_reward(s, g);
      EXPECT_TRUE(r == 0.0 || r == 1.0);
      EXPECT_TRUE(scratch.count(collision_penalty_reward(s, g)));
    }
  }
}

TEST(Augment, CenteredCropAtUnitBrightnessIsIdentity) {
  nn::Tensor t({2, 8, 8, 3});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  auto a = t;
  augment_image(a, 1, 4, 4, 1.0f, 4);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(a[i], t[i]);
}

TEST(Augment, BrightPixelClampsToOne) {
  nn::Tensor t({1, 4, 4, 1}, 0.9f);
  augment_image(t, 0, 4, 4, 1.2f, 4);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i], 1.0f);
}

TEST(Augment, ShiftMovesContentAndZeroFills) {
  nn::Tensor t({1, 4, 4, 1});
  t[0] = 0.5f;
  augment_image(t, 0, 3, 3, 1.0f, 4);  // crop origin one pixel up-left of center
  EXPECT_EQ(t[1 * 4 + 1], 0.5f);
  EXPECT_EQ(t[0], 0.0f);
}

TEST(Augment, MeanBrightnessStaysInRange) {
  // Content away from the border so crops never cut it off; values low enough to never clamp.
  nn::Tensor base({1, 64, 64, 1});
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 0.8f);
  double base_mean = 0.0;
  for (int i = 8; i < 56; ++i)
    for (int j = 8; j < 56; ++j) base_mean += base[static_cast<std::size_t>(i * 64 + j)] = u(rng);
  base_mean /= 64.0 * 64.0;
  AugmentConfig cfg;
  double lo = 10.0, hi = 0.0;
  for (int k = 0; k < 1000; ++k) {
    auto t = base;
    augment_batch(t, cfg, rng);
    double m = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) m += t[i];
    m /= static_cast<double>(t.size());
    lo = std::min(lo, m / base_mean);
    hi = std::max(hi, m / base_mean);
  }
  EXPECT_GE(lo, 0.8 - 1e-5);
  EXPECT_LE(hi, 1.2 + 1e-5);
  EXPECT_LT(lo, 0.85);
  EXPECT_GT(hi, 1.15);
}

TEST(Augment, ProprioIsUntouchedByBatchAssembly) {
  ReplayBuffer b(4);
  Transition t;
  t.obs = flat_obs(64, 100, 0.25f);
  t.next_obs = flat_obs(64, 100, -0.5f);
  b.add(t);
  SacConfig c;
  std::mt19937_64 rng(0);
  const auto batch = make_batch(b, {0, 0}, c, rng);
  for (int k = 0; k < kProprioDim; ++k) {
    EXPECT_EQ(batch.obs_proprio.at(1, k), 0.25f);
    EXPECT_EQ(batch.next_proprio.at(0, k), -0.5f);
  }
}

TEST(Replay, CapacityAndDemoProtection) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t cap = 5 + rng() % 40;
    ReplayBuffer b(cap);
    std::size_t demos_in = 0, agent_in = 0;
    for (int i = 0; i < 200; ++i) {
      Transition t;
      t.demo = rng() % 3 == 0;
      const bool demo = t.demo;
      // Reference model: a full buffer drops an agent transition, or a demo once none remain.
      if (demos_in + agent_in == cap) (agent_in > 0 ? agent_in : demos_in)--;
      (demo ? demos_in : agent_in)++;
      b.add(std::move(t));
      ASSERT_LE(b.size(), cap);
      ASSERT_EQ(b.demo_count(), demos_in);
      std::size_t flagged = 0;
      for (std::size_t k = 0; k < b.size(); ++k) flagged += b.at(k).demo;
      ASSERT_EQ(flagged, demos_in);
    }
  }
}

TEST(Replay, DemosSurviveWhileAgentDataRemains) {
  ReplayBuffer b(10);
  for (int i = 0; i < 6; ++i) {
    Transition t;
    t.demo = true;
    b.add(std::move(t));
  }
  for (int i = 0; i < 100; ++i) {
    Transition t;
    b.add(std::move(t));
    EXPECT_EQ(b.demo_count(), 6u);
  }
}

TEST(Replay, SeedingCountsAndTerminalRewards) {
  const auto demos = skill_demos(sim::SocketVariant::VGA, 25, 300);
  ReplayBuffer b(10000);
  seed_replay_with_demos(b, demos, kCfg, ObsKind::wrist);
  std::size_t expected = 0;
  for (const auto& d : demos) {
    ASSERT_TRUE(d.success);
    expected += d.frames.size() - 1;
  }
  ASSERT_EQ(b.size(), expected);
  EXPECT_EQ(b.demo_count(), expected);
  std::size_t k = 0, rewarded = 0;
  for (const auto& d : demos) {
    for (std::size_t t = 0; t + 1 < d.frames.size(); ++t, ++k) {
      const bool last = t + 2 == d.frames.size();
      EXPECT_EQ(b.at(k).reward, last ? 1.0f : 0.0f);
      EXPECT_EQ(b.at(k).done, last);
      EXPECT_TRUE(b.at(k).demo);
      rewarded += last;
    }
  }
  EXPECT_EQ(rewarded, demos.size());
  std::mt19937_64 rng(0);
  for (auto i : b.sample_indices(256, rng)) EXPECT_TRUE(b.at(i).demo);
}

TEST(Replay, EmptyDemoSetIsConfigError) {
  ReplayBuffer b(10);
  EXPECT_THROW(seed_replay_with_demos(b, {}, kCfg, ObsKind::wrist), ConfigError);
}

TEST(Sac, TauOneCopiesCriticIntoTarget) {
  auto c = small_config();
  c.tau = 1.0;
  SacAgent agent(c, 1);
  const auto buffer = bandit_buffer(1);
  std::mt19937_64 rng(2);
  const auto rec = sac_update(agent, make_batch(buffer, buffer.sample_indices(32, rng), c, rng));
  ASSERT_TRUE(rec.target_updated);
  EXPECT_TRUE(same_values(agent.critic, agent.critic_target));
}

TEST(Sac, PolyakRecursionIsExact) {
  auto c = small_config();
  SacAgent agent(c, 3);
  const auto buffer = bandit_buffer(3);
  std::mt19937_64 rng(4);
  for (int u = 0; u < 12; ++u) {
    const auto before = agent.critic_target;
    const auto rec = sac_update(agent, make_batch(buffer, buffer.sample_indices(32, rng), c, rng));
    EXPECT_EQ(rec.target_updated, u % 2 == 0);
    for (const auto& [name, p] : agent.critic_target.entries()) {
      const auto& src = agent.critic.get(name).value;
      const auto& old = before.get(name).value;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double expect = rec.target_updated ? c.tau * src[i] + (1.0 - c.tau) * old[i] : old[i];
        ASSERT_NEAR(p.value[i], expect, 1e-7 * (1.0 + std::abs(expect))) << name;
      }
    }
  }
}

TEST(Sac, ZeroDiscountTargetIsReward) {
  auto c = small_config();
  c.gamma = 0.0;
  SacAgent agent(c, 5);
  ReplayBuffer b(100);
  for (int i = 0; i < 20; ++i) {
    Transition t;
    t.obs = flat_obs(16, static_cast<std::uint8_t>(10 * i));
    t.next_obs = flat_obs(16, static_cast<std::uint8_t>(10 * i + 5));
    t.reward = static_cast<float>(i % 3);
    b.add(std::move(t));
  }
  std::mt19937_64 rng(6);
  std::vector<std::size_t> idx(20);
  std::iota(idx.begin(), idx.end(), 0);
  const auto batch = make_batch(b, idx, c, rng);
  nn::Tensor eps({20, kActionDim}, 0.3f);
  const auto y = critic_targets(agent, batch, eps);
  for (int r = 0; r < 20; ++r) EXPECT_EQ(y.at(r, 0), static_cast<float>(r % 3));
}

TEST(Sac, TargetMatchesIndependentSoftBellman) {
  auto c = small_config();
  c.gamma = 0.9;
  SacAgent agent(c, 8);
  const auto buffer = bandit_buffer(8);
  std::mt19937_64 rng(1);
  auto batch = make_batch(buffer, buffer.sample_indices(8, rng), c, rng);
  batch.not_done = nn::Tensor({8, 1}, 1.0f);
  nn::Tensor eps({8, kActionDim});
  std::normal_distribution<float> n;
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = n(rng);
  const auto y = critic_targets(agent, batch, eps);
  // Recompute each row alone with the documented formula.
  for (int r = 0; r < 8; ++r) {
    nn::NoGradGuard g;
    nn::Tensor img({1, 16, 16, 1}), prop({1, kProprioDim}), e({1, kActionDim});
    for (int k = 0; k < 256; ++k) img[static_cast<std::size_t>(k)] = batch.next_obs[static_cast<std::size_t>(r * 256 + k)];
    for (int k = 0; k < kProprioDim; ++k) prop.at(0, k) = batch.next_proprio.at(r, k);
    for (int k = 0; k < kActionDim; ++k) e.at(0, k) = eps.at(r, k);
    const auto pi = actor_forward(agent.actor, encode(agent.critic, nn::constant(img), c), nn::constant(prop), e, c);
    const auto [q1, q2] = q_heads(agent.critic_target, encode(agent.critic_target, nn::constant(img), c),
                                  nn::constant(prop), pi.action, c);
    // Log-density of the squashed Gaussian, written out per component.
    const auto out = nn::mlp_forward(agent.actor, "pi",
                                     nn::concat_cols(encode(agent.critic, nn::constant(img), c), nn::constant(prop)),
                                     std::array<int, 4>{c.latent + 4, c.hidden, c.hidden, 4}, nn::Activation::leaky_relu)->value;
    double logp = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double ls = c.log_std_min + 0.5 * (c.log_std_max - c.log_std_min) * (std::tanh(out.at(0, 2 + k)) + 1.0);
      const double u = out.at(0, k) + std::exp(ls) * e.at(0, k);
      const double a = std::tanh(u);
      logp += -0.5 * e.at(0, k) * e.at(0, k) - ls - 0.5 * std::log(2.0 * M_PI) - std::log(1.0 - a * a + 1e-6);
    }
    const double expect = batch.reward.at(r, 0) +
                          0.9 * (std::min(q1->value[0], q2->value[0]) - agent.alpha() * logp);
    EXPECT_NEAR(y.at(r, 0), expect, 1e-4 * (1.0 + std::abs(expect)));
  }
}

TEST(Sac, BanditQValuesMatchExpectedRewards) {
  auto c = small_config();
  c.lr = 3e-3f;
  SacAgent agent(c, 11);
  const auto buffer = bandit_buffer(11);
  std::mt19937_64 rng(12);
  for (int u = 0; u < 1500; ++u) sac_update(agent, make_batch(buffer, buffer.sample_indices(64, rng), c, rng));
  // Empirical per-state reward means are the closed-form optimum of the squared loss.
  double sum[2] = {0, 0}, cnt[2] = {0, 0};
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const int k = buffer.at(i).obs.image.pixels[0] > 100;
    sum[k] += buffer.at(i).reward;
    ++cnt[k];
  }
  nn::NoGradGuard g;
  for (int k = 0; k < 2; ++k) {
    const double expected = sum[k] / cnt[k];
    const auto o = flat_obs(16, k ? 200 : 20);
    const Observation* p = &o;
    const auto f = encode(agent.critic, nn::constant(image_batch({p})), c);
    double q = 0.0;
    const std::array<std::array<float, 2>, 5> probes{{{0, 0}, {0.5f, -0.5f}, {-0.9f, 0.2f}, {0.3f, 0.9f}, {-0.4f, -0.7f}}};
    for (const auto& a : probes) {
      const auto [q1, q2] = q_heads(agent.critic, f, nn::constant(proprio_batch({p})),
                                    nn::constant(nn::Tensor({1, 2}, std::vector<float>{a[0], a[1]})), c);
      q += 0.5 * (q1->value[0] + q2->value[0]);
    }
    q /= probes.size();
    EXPECT_NEAR(q, expected, 0.05) << "state " << k;
  }
}

TEST(Sac, AlphaStaysPositiveUnderAggressiveTuning) {
  auto c = small_config();
  c.alpha_lr = 0.5f;
  c.target_entropy = 50.0;  // unreachable, drives log alpha up; then flip it down
  SacAgent agent(c, 13);
  const auto buffer = bandit_buffer(13);
  std::mt19937_64 rng(14);
  for (int u = 0; u < 60; ++u) {
    const auto rec = sac_update(agent, make_batch(buffer, buffer.sample_indices(16, rng), c, rng));
    EXPECT_GT(rec.alpha, 0.0);
  }
  SacConfig down = c;
  down.target_entropy = -50.0;
  SacAgent low(down, 13);
  for (int u = 0; u < 200; ++u) {
    const auto rec = sac_update(low, make_batch(buffer, buffer.sample_indices(16, rng), down, rng));
    EXPECT_GT(rec.alpha, 0.0);
    EXPECT_TRUE(std::isfinite(rec.alpha));
  }
  EXPECT_LT(low.alpha(), c.init_alpha);
}

TEST(Sac, NanLossIsTrainingError) {
  auto c = small_config();
  SacAgent agent(c, 15);
  const auto buffer = bandit_buffer(15);
  std::mt19937_64 rng(16);
  auto batch = make_batch(buffer, buffer.sample_indices(8, rng), c, rng);
  batch.reward[0] = std::nanf("");
  EXPECT_THROW(sac_update(agent, batch), TrainingError);
}

TEST(Sac, IdenticalSeedsGiveIdenticalUpdates) {
  auto c = small_config();
  c.augment = true;
  c.augmentation.pad = 2;
  SacAgent a(c, 17), b(c, 17);
  const auto buffer = bandit_buffer(17);
  std::mt19937_64 ra(18), rb(18);
  for (int u = 0; u < 10; ++u) {
    const auto x = sac_update(a, make_batch(buffer, buffer.sample_indices(16, ra), c, ra));
    const auto y = sac_update(b, make_batch(buffer, buffer.sample_indices(16, rb), c, rb));
    EXPECT_EQ(x.critic_loss, y.critic_loss);
  }
  EXPECT_TRUE(same_values(a.critic, b.critic));
  EXPECT_TRUE(same_values(a.actor, b.actor));
  EXPECT_EQ(a.act(flat_obs(16, 90), false), b.act(flat_obs(16, 90), false));
}

TEST(Sac, ActionsStayWithinBounds) {
  auto c = small_config();
  SacAgent agent(c, 19);
  for (auto& [name, p] : agent.actor.entries())
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] *= 50.0f;
  std::mt19937_64 rng(20);
  for (int k = 0; k < 200; ++k) {
    const auto o = flat_obs(16, static_cast<std::uint8_t>(rng() % 256), static_cast<float>(rng() % 7) - 3.0f);
    for (bool greedy : {true, false}) {
      const auto a = agent.act(o, greedy);
      const Vec2 v = to_velocity(kCfg, a);
      for (float x : a) EXPECT_LE(std::abs(x), 1.0f);
      EXPECT_LE(std::abs(v.x), kCfg.v_max);
      EXPECT_LE(std::abs(v.y), kCfg.v_max);
    }
  }
}

TEST(Sac, CheckpointRoundTrip) {
  auto c = small_config();
  SacAgent agent(c, 21);
  const auto buffer = bandit_buffer(21);
  std::mt19937_64 rng(22);
  for (int u = 0; u < 4; ++u) sac_update(agent, make_batch(buffer, buffer.sample_indices(16, rng), c, rng));
  const auto path = std::filesystem::temp_directory_path() / "ocskill_agent_rt.nnc";
  save_agent(agent, path.string());
  auto loaded = load_agent(path.string(), c);
  EXPECT_TRUE(same_values(agent.critic, loaded.critic));
  EXPECT_TRUE(same_values(agent.critic_target, loaded.critic_target));
  EXPECT_TRUE(same_values(agent.actor, loaded.actor));
  EXPECT_EQ(agent.alpha(), loaded.alpha());
  EXPECT_EQ(agent.act(flat_obs(16, 40), true), loaded.act(flat_obs(16, 40), true));
  auto other = c;
  other.latent = 9;
  EXPECT_THROW(load_agent(path.string(), other), ConfigError);
  std::filesystem::remove(path);
}

TEST(SkillTraining, WarmupOnlyRunIsDeterministicAndOffline) {
  SacConfig c;
  c.batch = 16;
  const auto demos = skill_demos(sim::SocketVariant::RJ45, 3, 40);
  SkillTrainConfig t;
  t.env_steps = 0;
  t.warmup_updates = 6;
  t.eval_episodes = 2;
  t.horizon = 20;
  SacAgent a(c, 23), b(c, 23);
  const auto ra = train_skill(a, kCfg, sim::SocketVariant::RJ45, demos, t);
  const auto rb = train_skill(b, kCfg, sim::SocketVariant::RJ45, demos, t);
  EXPECT_EQ(ra.env_steps, 0);
  EXPECT_TRUE(ra.curve.empty());
  EXPECT_EQ(a.updates, 6);
  EXPECT_TRUE(same_values(a.critic, b.critic));
  EXPECT_EQ(ra.eval_success, rb.eval_success);
}

TEST(SkillTraining, ShortRunIsDeterministic) {
  SacConfig c;
  c.batch = 8;
  c.updates_per_env_step = 1;
  const auto demos = skill_demos(sim::SocketVariant::USBA, 2, 50);
  SkillTrainConfig t;
  t.env_steps = 30;
  t.warmup_updates = 2;
  t.horizon = 10;
  t.eval_episodes = 2;
  t.eval_interval = 15;
  SacAgent a(c, 24), b(c, 24);
  const auto ra = train_skill(a, kCfg, sim::SocketVariant::USBA, demos, t);
  const auto rb = train_skill(b, kCfg, sim::SocketVariant::USBA, demos, t);
  ASSERT_EQ(ra.curve.size(), rb.curve.size());
  EXPECT_GE(ra.curve.size(), 3u);
  for (std::size_t i = 0; i < ra.curve.size(); ++i) {
    EXPECT_EQ(ra.curve[i].env_step, rb.curve[i].env_step);
    EXPECT_EQ(ra.curve[i].critic_loss, rb.curve[i].critic_loss);
  }
  EXPECT_TRUE(same_values(a.actor, b.actor));
}

TEST(SkillTraining, ScratchWithoutDemosIsAllowedOnlyInFullWorkspace) {
  SacConfig c;
  SacAgent agent(c, 25);
  SkillTrainConfig t;
  t.env_steps = 0;
  EXPECT_THROW(train_skill(agent, kCfg, sim::SocketVariant::VGA, {}, t), ConfigError);
}

TEST(Bc, ConstantActionDemosGiveThatConstant) {
  std::vector<sim::Demonstration> demos;
  const Vec2 v{0.3 * kCfg.v_max, -0.5 * kCfg.v_max};
  for (int i = 0; i < 6; ++i) {
    auto s = sim::reset_limited(kCfg, 60 + i, sim::SocketVariant::Emodel, 1);
    sim::Demonstration d;
    for (int t = 0; t < 8; ++t) {
      auto f = sim::observe(kCfg, s, false, true);
      f.action = v;
      d.frames.push_back(std::move(f));
      s = sim::step(kCfg, s, v, kCfg.dt);
    }
    demos.push_back(std::move(d));
  }
  SacConfig arch;
  BcTrainConfig bc;
  bc.max_epochs = 60;
  bc.patience = 60;
  auto res = bc_train(demos, kCfg, arch, bc);
  for (int k = 0; k < 5; ++k) {
    const auto s = sim::reset_limited(kCfg, 900 + k, sim::SocketVariant::Emodel, 2);
    const auto a = bc_act(res.net, make_observation(kCfg, s, ObsKind::wrist));
    EXPECT_NEAR(a[0], 0.3f, 0.05f);
    EXPECT_NEAR(a[1], -0.5f, 0.05f);
  }
}

TEST(Bc, MemorizedDemoIsTrackedFromItsOwnStart) {
  const auto demos = skill_demos(sim::SocketVariant::RJ45, 8, 70);
  SacConfig arch;
  BcTrainConfig bc;
  bc.max_epochs = 150;
  bc.patience = 150;
  bc.augment = false;
  bc.holdout_fraction = 0.05;
  auto res = bc_train(demos, kCfg, arch, bc);
  BcPolicy policy(res.net);
  const auto& d = demos[0];
  auto s = sim::reset_limited(kCfg, 70, sim::SocketVariant::RJ45, 1);
  ASSERT_EQ(s.ee_pos, d.frames[0].ee_pos);
  double worst = 0.0;
  for (std::size_t t = 1; t < d.frames.size(); ++t) {
    s = sim::step(kCfg, s, policy.act(kCfg, s), kCfg.dt);
    worst = std::max(worst, sim::distance(s.ee_pos, d.frames[t].ee_pos));
  }
  EXPECT_LT(worst, 0.02);
}

TEST(Bc, OutputsAlwaysWithinBounds) {
  SacConfig arch;
  auto net = init_bc(arch, 3);
  for (auto& [name, p] : net.params.entries())
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] *= 30.0f;
  for (int k = 0; k < 20; ++k) {
    const auto s = sim::reset_limited(kCfg, 400 + k, sim::SocketVariant::VGA, 2);
    const auto a = bc_act(net, make_observation(kCfg, s, ObsKind::wrist));
    EXPECT_LE(std::abs(a[0]), 1.0f);
    EXPECT_LE(std::abs(a[1]), 1.0f);
  }
}

TEST(Heuristic, AlignedStartInsertsWithoutSweeping) {
  HeuristicPolicy h;
  const auto r = run_skill(kCfg, heuristic_start(0.0), h, 100);
  EXPECT_TRUE(r.success);
  EXPECT_EQ(h.phase(), HeuristicPolicy::Phase::insert);
}

TEST(Heuristic, SweepFindsHoleAtTwoCentimeters) {
  for (double off : {0.02, -0.02}) {
    HeuristicPolicy h;
    const auto r = run_skill(kCfg, heuristic_start(off), h, 1000);
    EXPECT_TRUE(r.success) << off;
    EXPECT_EQ(r.contact_steps, 0);
  }
}

TEST(Heuristic, EightCentimetersIsDeclaredFailure) {
  HeuristicPolicy h;
  const auto r = run_skill(kCfg, heuristic_start(0.08), h, 5000);
  EXPECT_FALSE(r.success);
  EXPECT_TRUE(r.gave_up);
  EXPECT_TRUE(h.failed());
}

TEST(Replay, ExactStartReplaysToSuccess) {
  for (auto v : {sim::SocketVariant::VGA, sim::SocketVariant::USBA}) {
    const auto demo = sim::oracle_demo(kCfg, 81, v, sim::DemoScope::limited_task_space);
    ASSERT_TRUE(demo.success);
    DemoReplayPolicy p(demo);
    const auto r = run_skill(kCfg, sim::reset_limited(kCfg, 81, v, 1), p, 100);
    EXPECT_TRUE(r.success);
    EXPECT_EQ(r.state.ee_pos, demo.frames.back().ee_pos);
  }
}

TEST(Replay, OffsetBeyondToleranceNeverOpensTheGate) {
  const auto demo = sim::oracle_demo(kCfg, 82, sim::SocketVariant::RJ45, sim::DemoScope::limited_task_space);
  for (double off : {0.011, 0.015, -0.02, 0.03}) {
    auto s = sim::reset_limited(kCfg, 82, sim::SocketVariant::RJ45, 1);
    s.ee_pos.x += off;
    DemoReplayPolicy p(demo);
    const auto r = run_skill(kCfg, s, p, 100);
    EXPECT_FALSE(r.success) << off;
    EXPECT_EQ(r.state.insertion_depth, 0.0) << off;
  }
}

TEST(Replay, EmptyDemoGivesNoActions) {
  sim::Demonstration empty;
  DemoReplayPolicy p(empty);
  EXPECT_TRUE(p.displacements().empty());
  const auto r = run_skill(kCfg, heuristic_start(0.03), p, 100);
  EXPECT_EQ(r.steps, 0);
  EXPECT_TRUE(r.gave_up);
}
