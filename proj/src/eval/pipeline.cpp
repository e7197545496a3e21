#include <chrono>
#include <cmath>
#include <limits>

#include "ocskill/errors.hpp"
#include "ocskill/eval/eval.hpp"
#include "ocskill/sim/render.hpp"

namespace ocskill::eval {

using sim::Vec2;

namespace {

class StageClock {
 public:
  explicit StageClock(TrialResult& r) : r_(r), t_(std::chrono::steady_clock::now()) {}
  void lap(const std::string& stage) {
    const auto now = std::chrono::steady_clock::now();
    r_.timings[stage] = std::chrono::duration<double>(now - t_).count();
    t_ = now;
  }

 private:
  TrialResult& r_;
  std::chrono::steady_clock::time_point t_;
};

std::array<double, 4> slot_box(const ocgm::SlotRepr& s) {
  return {s.z_where[0] - 0.5 * s.z_where[2], s.z_where[1] - 0.5 * s.z_where[3], s.z_where[2], s.z_where[3]};
}

TrialResult fail(TrialResult r, Stage stage, std::string detail) {
  r.success = false;
  r.failure_stage = stage;
  r.detail = std::move(detail);
  return r;
}

}  // namespace

bool TrialResult::same_outcome(const TrialResult& o) const {
  return method == o.method && task == o.task && seed == o.seed && success == o.success &&
         failure_stage == o.failure_stage && detail == o.detail && pre_transition_error == o.pre_transition_error &&
         post_transition_error == o.post_transition_error && plan_waypoints == o.plan_waypoints &&
         skill_steps == o.skill_steps && final_ee == o.final_ee;
}

void check_models(const PipelineContext& ctx, Method method, sim::SocketVariant task) {
  const std::string where = " for " + to_string(method) + " on " + sim::to_string(task);
  const auto it = ctx.tasks.find(task);
  if (it == ctx.tasks.end()) throw ConfigError("no models loaded" + where);
  const auto& m = it->second;
  if (method == Method::SAC_scratch) {
    if (!m.scratch) throw ConfigError("missing scratch agent checkpoint" + where);
    return;
  }
  if (!ctx.encoder.params.contains("enc.fc.l0.w")) throw ConfigError("missing OCGM encoder checkpoint" + where);
  if (m.goal.z_what_target.empty()) throw ConfigError("missing goal specification" + where);
  if (uses_transition(method) && !m.transition) throw ConfigError("missing transition checkpoint" + where);
  if ((method == Method::MP_RL || method == Method::MP_RL_no_transition) && !m.agent) {
    throw ConfigError("missing skill agent checkpoint" + where);
  }
  if (method == Method::MP_BC && !m.bc) throw ConfigError("missing behaviour-cloning checkpoint" + where);
  if (method == Method::MP_Replay && !m.replay_demo) throw ConfigError("missing replay demonstration" + where);
}

sim::WorldState trial_scene(const PipelineContext& ctx, std::uint64_t seed, sim::SocketVariant task) {
  const int span = ctx.max_obstacles - ctx.min_obstacles + 1;
  if (span <= 0) throw ConfigError("obstacle range is empty");
  const int n = ctx.min_obstacles + static_cast<int>(seed % static_cast<std::uint64_t>(span));
  return sim::reset_scene(ctx.world, seed, task, n);
}

mp::GoalSpec goal_from_demo(const PipelineContext& ctx, const sim::Demonstration& goal_demo, int n_obstacles) {
  if (goal_demo.frames.empty() || !goal_demo.frames.front().external) {
    throw ConfigError("goal demonstration has no external first frame");
  }
  const auto dec = ocgm::discover_objects(*goal_demo.frames.front().external, ctx.background, &ctx.encoder);
  const auto scene = sim::reset_scene(ctx.world, goal_demo.seed, goal_demo.task, n_obstacles);
  return mp::identify_target(goal_demo, dec, scene.camera);
}

std::array<double, 4> socket_box(const sim::WorldState& state) {
  const auto b = state.target().bounds();
  const Vec2 p0 = state.camera.world_to_pixel({b.left(), b.top()});
  const Vec2 p1 = state.camera.world_to_pixel({b.right(), b.bottom()});
  return {std::min(p0.x, p1.x), std::min(p0.y, p1.y), std::abs(p1.x - p0.x), std::abs(p1.y - p0.y)};
}

TrialResult run_pipeline_trial(PipelineContext& ctx, std::uint64_t seed, sim::SocketVariant task, Method method) {
  check_models(ctx, method, task);
  auto& models = ctx.tasks.at(task);
  TrialResult r;
  r.method = method;
  r.task = task;
  r.seed = seed;
  StageClock clock(r);
  sim::WorldState state = trial_scene(ctx, seed, task);
  r.final_ee = state.ee_pos;

  if (method == Method::SAC_scratch) {
    rl::SacPolicy policy(*models.scratch, true);
    const auto roll = rl::run_skill(ctx.world, state, policy, ctx.scratch_horizon);
    clock.lap("skill");
    r.skill_steps = roll.steps;
    r.final_ee = roll.state.ee_pos;
    if (!roll.success) return fail(r, Stage::skill, "goal region not reached");
    r.success = true;
    return r;
  }

  const auto image = sim::render_external(ctx.world, state);
  ocgm::SceneDecomposition dec;
  int slot = -1;
  try {
    dec = ocgm::discover_objects(image, ctx.background, &ctx.encoder);
    slot = mp::reidentify(models.goal.z_what_target, dec);
  } catch (const IdentificationError& e) {
    clock.lap("goal_id");
    return fail(r, Stage::goal_id, e.what());
  }
  clock.lap("goal_id");
  if (iou(slot_box(dec.slots[static_cast<std::size_t>(slot)]), socket_box(state)) <= 0.5) {
    return fail(r, Stage::goal_id, "re-identified slot is not the target socket");
  }

  try {
    const Vec2 o_target = mp::slot_position(dec, slot, state.camera);
    const auto grid = mp::scene_occupancy(ctx.world, state, dec, slot, ctx.mp, seed);
    const auto plan = mp::plan_rrt_connect(state.ee_pos, mp::standoff_pose(o_target, ctx.mp.standoff), grid, seed,
                                           ctx.mp.rrt);
    if (!plan.success) {
      clock.lap("planning");
      return fail(r, Stage::planning, "planner budget exhausted");
    }
    r.plan_waypoints = static_cast<int>(plan.waypoints.size());
    state = mp::execute_plan(plan, ctx.world, state).state;
  } catch (const PlanningError& e) {
    clock.lap("planning");
    return fail(r, Stage::planning, e.what());
  } catch (const DomainError& e) {
    clock.lap("planning");
    return fail(r, Stage::planning, e.what());
  } catch (const ExecutionFault& e) {
    clock.lap("planning");
    return fail(r, Stage::planning, e.what());
  }
  clock.lap("planning");
  r.final_ee = state.ee_pos;

  const Vec2 skill_start = sim::rl_start_pose(ctx.world, state.target());
  r.pre_transition_error = sim::distance(state.ee_pos, skill_start);
  r.post_transition_error = r.pre_transition_error;
  if (uses_transition(method)) {
    const auto out = transition::apply_transition(*models.transition, ctx.world, state);
    clock.lap("transition");
    state = out.state;
    r.final_ee = state.ee_pos;
    r.post_transition_error = sim::distance(state.ee_pos, skill_start);
    if (out.contact) return fail(r, Stage::transition, "contact during transition move");
  }

  std::unique_ptr<rl::SkillPolicy> policy;
  switch (method) {
    case Method::MP_RL:
    case Method::MP_RL_no_transition: policy = std::make_unique<rl::SacPolicy>(*models.agent, true); break;
    case Method::MP_BC: policy = std::make_unique<rl::BcPolicy>(*models.bc); break;
    case Method::MP_Heuristic: policy = std::make_unique<rl::HeuristicPolicy>(ctx.heuristic); break;
    case Method::MP_Replay: policy = std::make_unique<rl::DemoReplayPolicy>(*models.replay_demo); break;
    case Method::SAC_scratch: break;
  }
  const auto roll = rl::run_skill(ctx.world, state, *policy, ctx.skill_horizon);
  clock.lap("skill");
  r.skill_steps = roll.steps;
  r.final_ee = roll.state.ee_pos;
  if (!roll.success) return fail(r, Stage::skill, roll.gave_up ? "policy gave up" : "goal region not reached");
  r.success = true;
  return r;
}

}  // namespace ocskill::eval
