#include "ocskill/eval/artifacts.hpp"

#include <chrono>
#include <fstream>
#include <json.hpp>

#include "ocskill/errors.hpp"

namespace ocskill::eval {

namespace fs = std::filesystem;

namespace {

std::uint64_t task_seed(std::uint64_t seed, sim::SocketVariant task, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(task), static_cast<std::uint32_t>(salt)};
  std::mt19937_64 rng(seq);
  return rng();
}

void say(const PrepareConfig& c, const std::string& msg) {
  if (c.log) c.log(msg);
}

void ensure_parent(const fs::path& p) { fs::create_directories(p.parent_path()); }

}  // namespace

rl::SacConfig skill_sac_config() { return {}; }

rl::SacConfig scratch_sac_config() {
  rl::SacConfig c;
  c.obs_kind = rl::ObsKind::wrist_and_external;
  return c;
}

rl::SkillTrainConfig scratch_train_config(const rl::SkillTrainConfig& skill, int env_steps) {
  rl::SkillTrainConfig c = skill;
  c.full_workspace = true;
  c.env_steps = env_steps;
  c.warmup_updates = 0;
  c.horizon = 300;
  c.n_obstacles = 2;
  c.eval_interval = std::max(1, env_steps);
  c.eval_episodes = 20;
  return c;
}

void save_summary(const SkillSummary& s, const std::string& path) {
  nlohmann::ordered_json j;
  j["env_steps"] = s.env_steps;
  j["episodes"] = s.episodes;
  j["eval_success"] = s.eval_success;
  j["reached_bar"] = s.reached_bar;
  j["seconds"] = s.seconds;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

SkillSummary load_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  const auto j = nlohmann::json::parse(in);
  SkillSummary s;
  s.env_steps = j.at("env_steps").get<int>();
  s.episodes = j.at("episodes").get<int>();
  s.eval_success = j.at("eval_success").get<double>();
  s.reached_bar = j.at("reached_bar").get<bool>();
  s.seconds = j.at("seconds").get<double>();
  return s;
}

ocgm::BackgroundModel standard_background(const sim::WorldConfig& world) {
  return ocgm::fit_background(world.external_size, kBackgroundRenders, kBackgroundSeed);
}

ocgm::PatchEncoder prepare_encoder(const ArtifactPaths& paths, const PrepareConfig& config) {
  if (fs::exists(paths.encoder())) return ocgm::load_encoder(paths.encoder().string());
  say(config, "pretraining encoder on " + std::to_string(config.pretrain_scenes) + " scenes");
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = ocgm::generate_pretraining_set(config.pretrain_scenes, config.seed);
  const auto bg = ocgm::fit_background(128, kBackgroundRenders, kBackgroundSeed);
  auto ae = config.autoencoder;
  ae.seed = config.seed;
  const auto res = ocgm::train_patch_autoencoder(data, bg, ae);
  ensure_parent(paths.encoder());
  ocgm::save_encoder(res.encoder, paths.encoder().string());
  nlohmann::ordered_json j;
  j["scenes"] = config.pretrain_scenes;
  j["patches"] = res.n_patches;
  j["epochs"] = res.train_loss.size();
  j["holdout_mse"] = res.holdout_loss.back();
  j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ofstream(paths.encoder_summary()) << j.dump(2) << '\n';
  say(config, "encoder pretrained in " + std::to_string(j["seconds"].get<double>()) + " s");
  return res.encoder;
}

void prepare_task(const ArtifactPaths& paths, const sim::WorldConfig& world, sim::SocketVariant task,
                  const PrepareConfig& config) {
  const std::string tn = sim::to_string(task);

  if (!fs::exists(paths.goal_demo(task))) {
    std::uint64_t s = task_seed(config.seed, task, 1);
    sim::Demonstration demo;
    for (int attempt = 0; attempt < 20 && !demo.success; ++attempt, ++s) {
      demo = sim::oracle_demo(world, s, task, sim::DemoScope::full_workspace, kGoalDemoObstacles);
    }
    if (!demo.success) throw SceneGenerationError("no successful goal demonstration for " + tn);
    ensure_parent(paths.goal_demo(task));
    sim::save_demos(paths.goal_demo(task).string(), {demo});
    say(config, tn + ": goal demo recorded (" + std::to_string(demo.frames.size()) + " frames)");
  }

  if (!fs::exists(paths.skill_demos(task))) {
    std::vector<sim::Demonstration> demos;
    std::uint64_t s = task_seed(config.seed, task, 2);
    for (int tries = 0; static_cast<int>(demos.size()) < config.skill_demos && tries < 10 * config.skill_demos; ++tries) {
      auto d = sim::oracle_demo(world, s++, task, sim::DemoScope::limited_task_space);
      if (d.success) demos.push_back(std::move(d));
    }
    ensure_parent(paths.skill_demos(task));
    sim::save_demos(paths.skill_demos(task).string(), demos);
    say(config, tn + ": " + std::to_string(demos.size()) + " skill demos recorded");
  }
  const auto demos = sim::load_demos(paths.skill_demos(task).string());

  if (!fs::exists(paths.transition(task))) {
    if (!fs::exists(paths.transition_data(task))) {
      ensure_parent(paths.transition_data(task));
      sim::save_demos(paths.transition_data(task).string(),
                      transition::collect_transition_dataset(world, task, task_seed(config.seed, task, 3),
                                                             config.transition_data));
    }
    auto tc = config.transition;
    tc.seed = task_seed(config.seed, task, 4);
    const auto res = transition::train_transition(
        transition::transition_samples(sim::load_demos(paths.transition_data(task).string())), tc);
    transition::save_transition(res.net, paths.transition(task).string());
    say(config, tn + ": transition network holdout median error " + std::to_string(res.holdout_median_error) + " m");
  }

  if (!fs::exists(paths.agent(task))) {
    rl::SacAgent agent(skill_sac_config(), task_seed(config.seed, task, 5));
    auto sc = config.skill;
    sc.seed = task_seed(config.seed, task, 6);
    sc.fault_dump_path = (paths.root / "skill" / (tn + "_fault.nnc")).string();
    ensure_parent(paths.agent(task));
    const auto res = rl::train_skill(agent, world, task, demos, sc);
    rl::save_agent(agent, paths.agent(task).string());
    rl::write_curve_csv(res.curve, paths.agent_curve(task).string());
    save_summary({res.env_steps, res.episodes, res.eval_success, res.reached_bar, res.seconds},
                 paths.agent_summary(task).string());
    say(config, tn + ": SAC skill " + std::to_string(res.env_steps) + " env steps, greedy success " +
                    std::to_string(res.eval_success) + (res.reached_bar ? "" : " (below the training bar)"));
  }

  if (!fs::exists(paths.bc(task))) {
    auto bc = config.bc;
    bc.seed = task_seed(config.seed, task, 7);
    const auto res = rl::bc_train(demos, world, skill_sac_config(), bc);
    ensure_parent(paths.bc(task));
    rl::save_bc(res.net, paths.bc(task).string());
    say(config, tn + ": BC holdout mse " + std::to_string(res.holdout_loss.back()));
  }

  if (config.scratch && !fs::exists(paths.scratch(task))) {
    const int budget = config.skill.env_steps;
    rl::SacAgent agent(scratch_sac_config(), task_seed(config.seed, task, 8));
    auto sc = scratch_train_config(config.skill, budget);
    sc.seed = task_seed(config.seed, task, 9);
    const auto res = rl::train_skill(agent, world, task, {}, sc);
    ensure_parent(paths.scratch(task));
    rl::save_agent(agent, paths.scratch(task).string());
    rl::write_curve_csv(res.curve, paths.scratch_curve(task).string());
    save_summary({res.env_steps, res.episodes, res.eval_success, res.reached_bar, res.seconds},
                 paths.scratch_summary(task).string());
    say(config, tn + ": SAC from scratch " + std::to_string(res.env_steps) + " env steps, greedy success " +
                    std::to_string(res.eval_success));
  }
}

PipelineContext load_context(const ArtifactPaths& paths, const sim::WorldConfig& world,
                             const std::vector<sim::SocketVariant>& tasks) {
  PipelineContext ctx;
  ctx.world = world;
  ctx.background = standard_background(world);
  if (fs::exists(paths.encoder())) ctx.encoder = ocgm::load_encoder(paths.encoder().string());
  for (auto task : tasks) {
    TaskModels m;
    if (fs::exists(paths.goal_demo(task)) && !ctx.encoder.params.entries().empty()) {
      const auto goal = sim::load_demos(paths.goal_demo(task).string()).at(0);
      m.goal = goal_from_demo(ctx, goal, kGoalDemoObstacles);
      m.goal_template = template_from_demo(world, goal, kGoalDemoObstacles);
    }
    if (fs::exists(paths.transition(task))) m.transition = transition::load_transition(paths.transition(task).string());
    if (fs::exists(paths.agent(task))) {
      m.agent = std::make_shared<rl::SacAgent>(rl::load_agent(paths.agent(task).string(), skill_sac_config()));
    }
    if (fs::exists(paths.bc(task))) m.bc = std::make_shared<rl::BcNet>(rl::load_bc(paths.bc(task).string(), skill_sac_config()));
    if (fs::exists(paths.skill_demos(task))) {
      auto demos = sim::load_demos(paths.skill_demos(task).string());
      if (!demos.empty()) m.replay_demo = demos.front();
    }
    if (fs::exists(paths.scratch(task))) {
      m.scratch = std::make_shared<rl::SacAgent>(rl::load_agent(paths.scratch(task).string(), scratch_sac_config()));
    }
    ctx.tasks[task] = std::move(m);
  }
  return ctx;
}

}  // namespace ocskill::eval
