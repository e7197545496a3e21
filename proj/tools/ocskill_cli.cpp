#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "ocskill/errors.hpp"
#include "ocskill/eval/artifacts.hpp"
#include "ocskill/eval/eval.hpp"
#include "ocskill/ocgm/dataset.hpp"

using namespace ocskill;
namespace fs = std::filesystem;

namespace {

std::vector<sim::SocketVariant> parse_tasks(const std::vector<std::string>& names) {
  std::vector<sim::SocketVariant> out;
  for (const auto& n : names) out.push_back(sim::parse_variant(n));
  return out;
}

const auto kStart = std::chrono::steady_clock::now();

void log_line(const std::string& s) {
  const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - kStart).count();
  std::fprintf(stderr, "[%7.1fs] %s\n", t, s.c_str());
}

void print_rows(const std::vector<eval::ReportRow>& rows) {
  std::printf("%-22s %-8s %4s %4s %8s %16s\n", "method", "task", "n", "ok", "rate", "95% WSI");
  for (const auto& r : rows) {
    std::printf("%-22s %-8s %4d %4d %7.1f%% %7.1f/%5.1f%%\n", r.method.c_str(), r.task.c_str(), r.n, r.successes,
                100 * r.rate, 100 * r.lo, 100 * r.hi);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-centric modular skill pipeline: pretraining, demos, training, planning and evaluation"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "World configuration JSON")->check(CLI::ExistingFile);

  // pretrain-encoder
  auto* pre = app.add_subcommand("pretrain-encoder", "Generate jittered scenes and pretrain the patch encoder");
  int pre_scenes = 2000, pre_epochs = 40;
  std::uint64_t pre_seed = 1;
  std::string pre_out, pre_dataset;
  pre->add_option("--scenes", pre_scenes, "Number of pretraining scenes")->check(CLI::PositiveNumber);
  pre->add_option("--seed", pre_seed, "Random seed");
  pre->add_option("--out", pre_out, "Encoder checkpoint path")->required();
  pre->add_option("--dataset", pre_dataset, "Also write the scenes to this directory (PPM + manifest.json)");
  pre->add_option("--epochs", pre_epochs, "Maximum autoencoder epochs")->check(CLI::PositiveNumber);

  // collect-demos
  auto* col = app.add_subcommand("collect-demos", "Record oracle demonstrations or transition data");
  std::string col_task = "VGA", col_kind = "skill", col_out;
  int col_n = 25;
  std::uint64_t col_seed = 1;
  col->add_option("--task", col_task, "Socket variant");
  col->add_option("--kind", col_kind, "goal | skill | transition")->check(CLI::IsMember({"goal", "skill", "transition"}));
  col->add_option("--n", col_n, "Number of demonstrations / trajectories")->check(CLI::PositiveNumber);
  col->add_option("--seed", col_seed, "Random seed");
  col->add_option("--out", col_out, "DEMO1 output path")->required();

  // train-skill
  auto* tsk = app.add_subcommand("train-skill", "Train the SAC insertion skill from seeded demonstrations");
  std::string tsk_task = "VGA", tsk_demos, tsk_out, tsk_curve;
  int tsk_steps = 1500;
  std::uint64_t tsk_seed = 1;
  bool tsk_scratch = false;
  tsk->add_option("--task", tsk_task, "Socket variant");
  tsk->add_option("--demos", tsk_demos, "DEMO1 skill demonstrations");
  tsk->add_option("--steps", tsk_steps, "Environment step budget")->check(CLI::NonNegativeNumber);
  tsk->add_option("--seed", tsk_seed, "Random seed");
  tsk->add_option("--out", tsk_out, "Agent checkpoint path")->required();
  tsk->add_option("--curve", tsk_curve, "Training curve CSV path");
  tsk->add_flag("--scratch", tsk_scratch, "Full-workspace SAC without demonstrations (collision-penalty reward)");

  // train-bc
  auto* tbc = app.add_subcommand("train-bc", "Behaviour cloning baseline from skill demonstrations");
  std::string tbc_demos, tbc_out;
  std::uint64_t tbc_seed = 1;
  tbc->add_option("--demos", tbc_demos, "DEMO1 skill demonstrations")->required();
  tbc->add_option("--seed", tbc_seed, "Random seed");
  tbc->add_option("--out", tbc_out, "Checkpoint path")->required();

  // train-transition
  auto* ttr = app.add_subcommand("train-transition", "Train the skill-transition offset regressor");
  std::string ttr_task = "VGA", ttr_in, ttr_out;
  std::uint64_t ttr_seed = 1;
  ttr->add_option("--task", ttr_task, "Socket variant");
  ttr->add_option("--in", ttr_in, "Transition data (DEMO1); collected when the file does not exist");
  ttr->add_option("--out", ttr_out, "Checkpoint path")->required();
  ttr->add_option("--seed", ttr_seed, "Random seed");

  // plan
  auto* pln = app.add_subcommand("plan", "Identify the target in a scene, plan to the hand-off pose, export plan and grid");
  std::uint64_t pln_seed = 1;
  std::string pln_task = "VGA", pln_out, pln_art = "artifacts";
  pln->add_option("--scene-seed", pln_seed, "Scene seed");
  pln->add_option("--task", pln_task, "Socket variant");
  pln->add_option("--out", pln_out, "Plan CSV path; the grid is written next to it as .pgm")->required();
  pln->add_option("--artifacts", pln_art, "Artifact directory (encoder and goal demo)");

  // prepare
  auto* prep = app.add_subcommand("prepare", "Build every checkpoint the evaluation needs");
  std::string prep_art = "artifacts";
  std::vector<std::string> prep_tasks{"VGA", "RJ45", "Emodel", "USBA"};
  std::uint64_t prep_seed = 1;
  int prep_steps = 1500, prep_scenes = 2000;
  bool prep_no_scratch = false;
  prep->add_option("--artifacts", prep_art, "Artifact directory");
  prep->add_option("--tasks", prep_tasks, "Socket variants");
  prep->add_option("--seed", prep_seed, "Random seed");
  prep->add_option("--skill-steps", prep_steps, "SAC environment step budget per task");
  prep->add_option("--scenes", prep_scenes, "Encoder pretraining scenes");
  prep->add_flag("--no-scratch", prep_no_scratch, "Skip the SAC-from-scratch baseline");

  // run-eval
  auto* run = app.add_subcommand("run-eval", "Pipeline success-rate comparison");
  std::vector<std::string> run_methods{"MP_RL", "MP_RL_no_transition", "MP_BC", "MP_Heuristic", "MP_Replay", "SAC_scratch"};
  std::vector<std::string> run_tasks{"VGA", "RJ45", "Emodel", "USBA"};
  int run_trials = 30;
  std::uint64_t run_seed = 1000;
  std::string run_art = "artifacts", run_out = "eval_out";
  run->add_option("--methods", run_methods, "Methods to evaluate");
  run->add_option("--tasks", run_tasks, "Socket variants");
  run->add_option("--trials", run_trials, "Trials per (method, task)")->check(CLI::PositiveNumber);
  run->add_option("--seed", run_seed, "First trial seed");
  run->add_option("--artifacts", run_art, "Artifact directory");
  run->add_option("--out", run_out, "Output directory for report.csv, report.svg, failures.csv and trials/");

  // goal-id-eval
  auto* gid = app.add_subcommand("goal-id-eval", "Target identification benchmark (OCGM vs template matching)");
  int gid_scenes = 40;
  std::uint64_t gid_seed = 1;
  std::string gid_art = "artifacts", gid_out = "goal_id_out";
  std::vector<std::string> gid_tasks{"VGA", "RJ45", "Emodel", "USBA"};
  gid->add_option("--scenes", gid_scenes, "Scenes per task")->check(CLI::PositiveNumber);
  gid->add_option("--seed", gid_seed, "Random seed");
  gid->add_option("--tasks", gid_tasks, "Socket variants");
  gid->add_option("--artifacts", gid_art, "Artifact directory");
  gid->add_option("--out", gid_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    const sim::WorldConfig world = config_path.empty() ? sim::WorldConfig{} : sim::load_world_config(config_path);

    if (*pre) {
      const auto data = ocgm::generate_pretraining_set(pre_scenes, pre_seed);
      if (!pre_dataset.empty()) ocgm::save_pretraining_set(data, pre_dataset);
      ocgm::AeTrainConfig ae;
      ae.max_epochs = pre_epochs;
      ae.seed = pre_seed;
      const auto res = ocgm::train_patch_autoencoder(data, eval::standard_background(world), ae);
      ocgm::save_encoder(res.encoder, pre_out);
      std::cout << "patches " << res.n_patches << ", epochs " << res.train_loss.size() << ", holdout mse "
                << res.holdout_loss.back() << "\n";
    } else if (*col) {
      const auto task = sim::parse_variant(col_task);
      std::vector<sim::Demonstration> demos;
      if (col_kind == "transition") {
        transition::CollectConfig cc;
        cc.n_trajectories = col_n;
        demos = transition::collect_transition_dataset(world, task, col_seed, cc);
      } else {
        const auto scope = col_kind == "goal" ? sim::DemoScope::full_workspace : sim::DemoScope::limited_task_space;
        for (int i = 0; i < col_n; ++i) {
          demos.push_back(sim::oracle_demo(world, col_seed + static_cast<std::uint64_t>(i), task, scope,
                                           col_kind == "goal" ? eval::kGoalDemoObstacles : 1));
        }
      }
      sim::save_demos(col_out, demos);
      int ok = 0;
      for (const auto& d : demos) ok += d.success;
      std::cout << demos.size() << " records written, " << ok << " successful\n";
    } else if (*tsk) {
      const auto task = sim::parse_variant(tsk_task);
      rl::SkillTrainConfig sc;
      sc.env_steps = tsk_steps;
      sc.seed = tsk_seed;
      sc.fault_dump_path = tsk_out + ".fault";
      std::vector<sim::Demonstration> demos;
      if (!tsk_demos.empty()) demos = sim::load_demos(tsk_demos);
      if (tsk_scratch) sc = eval::scratch_train_config(sc, tsk_steps);
      rl::SacAgent agent(tsk_scratch ? eval::scratch_sac_config() : eval::skill_sac_config(), tsk_seed);
      const auto res = rl::train_skill(agent, world, task, tsk_scratch ? std::vector<sim::Demonstration>{} : demos, sc);
      rl::save_agent(agent, tsk_out);
      if (!tsk_curve.empty()) rl::write_curve_csv(res.curve, tsk_curve);
      std::cout << "env steps " << res.env_steps << ", episodes " << res.episodes << ", greedy success "
                << res.eval_success << ", " << res.seconds << " s\n";
      if (!res.reached_bar) std::cout << "training bar not reached within the budget\n";
    } else if (*tbc) {
      rl::BcTrainConfig bc;
      bc.seed = tbc_seed;
      const auto res = rl::bc_train(sim::load_demos(tbc_demos), world, eval::skill_sac_config(), bc);
      rl::save_bc(res.net, tbc_out);
      std::cout << "train " << res.n_train << ", holdout " << res.n_holdout << ", holdout mse " << res.holdout_loss.back()
                << "\n";
    } else if (*ttr) {
      const auto task = sim::parse_variant(ttr_task);
      std::vector<sim::Demonstration> data;
      if (!ttr_in.empty() && fs::exists(ttr_in)) {
        data = sim::load_demos(ttr_in);
      } else {
        data = transition::collect_transition_dataset(world, task, ttr_seed);
        if (!ttr_in.empty()) sim::save_demos(ttr_in, data);
      }
      transition::TransitionTrainConfig tc;
      tc.seed = ttr_seed;
      const auto res = transition::train_transition(transition::transition_samples(data), tc);
      transition::save_transition(res.net, ttr_out);
      std::cout << "train " << res.n_train << ", holdout " << res.n_holdout << ", holdout median error "
                << res.holdout_median_error << " m\n";
    } else if (*pln) {
      const auto task = sim::parse_variant(pln_task);
      eval::ArtifactPaths paths{pln_art};
      auto ctx = eval::load_context(paths, world, {task});
      eval::check_models(ctx, eval::Method::MP_Replay, task);
      const auto state = eval::trial_scene(ctx, pln_seed, task);
      const auto dec = ocgm::discover_objects(sim::render_external(world, state), ctx.background, &ctx.encoder);
      const int slot = mp::reidentify(ctx.tasks.at(task).goal.z_what_target, dec);
      const auto grid = mp::scene_occupancy(world, state, dec, slot, ctx.mp, pln_seed);
      const auto goal = mp::standoff_pose(mp::slot_position(dec, slot, state.camera), ctx.mp.standoff);
      const auto plan = mp::plan_rrt_connect(state.ee_pos, goal, grid, pln_seed, ctx.mp.rrt);
      mp::write_plan_csv(plan, pln_out);
      mp::write_grid_pgm(grid, fs::path(pln_out).replace_extension(".pgm").string());
      std::cout << (plan.success ? "plan found" : "no plan") << ", " << plan.waypoints.size() << " waypoints, "
                << plan.iterations << " iterations\n";
      if (!plan.success) return 2;
    } else if (*prep) {
      eval::ArtifactPaths paths{prep_art};
      eval::PrepareConfig pc;
      pc.seed = prep_seed;
      pc.pretrain_scenes = prep_scenes;
      pc.skill.env_steps = prep_steps;
      pc.scratch = !prep_no_scratch;
      pc.log = log_line;
      eval::prepare_encoder(paths, pc);
      for (auto task : parse_tasks(prep_tasks)) eval::prepare_task(paths, world, task, pc);
    } else if (*run) {
      const auto tasks = parse_tasks(run_tasks);
      std::vector<eval::Method> methods;
      for (const auto& m : run_methods) methods.push_back(eval::parse_method(m));
      auto ctx = eval::load_context(eval::ArtifactPaths{run_art}, world, tasks);
      for (auto t : tasks)
        for (auto m : methods) eval::check_models(ctx, m, t);
      std::vector<eval::TrialResult> results;
      for (auto t : tasks)
        for (auto m : methods)
          for (int k = 0; k < run_trials; ++k)
            results.push_back(eval::run_pipeline_trial(ctx, run_seed + static_cast<std::uint64_t>(k), t, m));
      print_rows(eval::aggregate_and_emit(results, run_out));
    } else if (*gid) {
      const auto tasks = parse_tasks(gid_tasks);
      auto ctx = eval::load_context(eval::ArtifactPaths{gid_art}, world, tasks);
      eval::IdentificationConfig ic;
      ic.scenes_per_task = gid_scenes;
      ic.seed = gid_seed;
      ic.tasks = tasks;
      const auto rows = eval::aggregate(eval::run_identification_benchmark(ctx, ic));
      fs::create_directories(gid_out);
      eval::write_report_csv(rows, (fs::path(gid_out) / "report.csv").string());
      eval::write_report_svg(rows, (fs::path(gid_out) / "report.svg").string(), "Target identification, IoU > 0.5");
      print_rows(rows);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
