#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ocskill/mp/identify.hpp"
#include "ocskill/mp/planner.hpp"
#include "ocskill/ocgm/ocgm.hpp"
#include "ocskill/rl/baselines.hpp"
#include "ocskill/rl/sac.hpp"
#include "ocskill/transition/transition.hpp"

namespace ocskill::eval {

enum class Method { MP_RL, MP_RL_no_transition, MP_BC, MP_Heuristic, MP_Replay, SAC_scratch };
enum class Stage { goal_id, planning, transition, skill, none };

inline constexpr std::array<Method, 6> kAllMethods{Method::MP_RL,        Method::MP_RL_no_transition, Method::MP_BC,
                                                   Method::MP_Heuristic, Method::MP_Replay,           Method::SAC_scratch};

std::string to_string(Method m);
std::string to_string(Stage s);
Method parse_method(const std::string& name);

bool uses_transition(Method m);

/// Wilson score interval; z defaults to the two-sided 95% quantile.
std::pair<double, double> wilson_interval(int successes, int n, double z = 1.959964);

/// Boxes are (x, y, w, h).
double iou(const std::array<double, 4>& a, const std::array<double, 4>& b);

struct TrialResult {
  Method method = Method::MP_RL;
  sim::SocketVariant task = sim::SocketVariant::VGA;
  std::uint64_t seed = 0;
  bool success = false;
  Stage failure_stage = Stage::none;
  std::string detail;
  std::map<std::string, double> timings;  // seconds per stage
  double pre_transition_error = -1.0;     // distance to the skill start pose, when the MP stage completed
  double post_transition_error = -1.0;
  int plan_waypoints = 0;
  int skill_steps = 0;
  sim::Vec2 final_ee;

  /// Equality ignoring wall-clock timings.
  bool same_outcome(const TrialResult& other) const;
};

struct Template {
  sim::Image patch;
};

struct TaskModels {
  mp::GoalSpec goal;
  std::optional<Template> goal_template;
  std::optional<transition::TransitionNet> transition;
  std::shared_ptr<rl::SacAgent> agent;
  std::shared_ptr<rl::BcNet> bc;
  std::optional<sim::Demonstration> replay_demo;
  std::shared_ptr<rl::SacAgent> scratch;
};

struct PipelineContext {
  sim::WorldConfig world;
  ocgm::BackgroundModel background;
  ocgm::PatchEncoder encoder;
  mp::MpConfig mp;
  rl::HeuristicConfig heuristic;
  std::map<sim::SocketVariant, TaskModels> tasks;
  int skill_horizon = 100;
  int scratch_horizon = 300;
  int min_obstacles = 1;
  int max_obstacles = 3;
};

/// Throws ConfigError naming the first model the method needs but the context lacks.
void check_models(const PipelineContext& ctx, Method method, sim::SocketVariant task);

/// Scene of a trial: obstacle count and calibration noise follow from the seed.
sim::WorldState trial_scene(const PipelineContext& ctx, std::uint64_t seed, sim::SocketVariant task);

/// reset -> discover/reidentify -> pixel_to_world -> occupancy -> plan -> execute -> (transition) -> skill.
TrialResult run_pipeline_trial(PipelineContext& ctx, std::uint64_t seed, sim::SocketVariant task, Method method);

/// Goal specification from a full-workspace demo: decomposition of its first external frame,
/// target chosen by the demo's final end-effector position. `n_obstacles` is the count the demo was recorded with.
mp::GoalSpec goal_from_demo(const PipelineContext& ctx, const sim::Demonstration& goal_demo, int n_obstacles);

/// Pixel box of the socket mount in the external camera.
std::array<double, 4> socket_box(const sim::WorldState& state);

/// Socket crop of the goal demo's first external frame.
Template template_from_demo(const sim::WorldConfig& world, const sim::Demonstration& goal_demo, int n_obstacles);
/// Box of the argmax of normalized cross-correlation of `tmpl` over `scene`.
std::array<double, 4> match_template(const sim::Image& scene, const Template& tmpl);

struct ReportRow {
  std::string method;
  std::string task;
  int n = 0;
  int successes = 0;
  double rate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct IdentificationTrial {
  std::string method;  // "OCGM" or "Template"
  sim::SocketVariant task = sim::SocketVariant::VGA;
  std::uint64_t seed = 0;
  double iou = 0.0;
  bool success = false;
};

struct IdentificationConfig {
  int scenes_per_task = 40;
  int min_distractors = 2;
  int max_distractors = 5;
  std::uint64_t seed = 1;
  std::vector<sim::SocketVariant> tasks{sim::kAllVariants.begin(), sim::kAllVariants.end()};
};

/// OCGM re-identification and template matching, scored by IoU > 0.5 against simulator boxes.
std::vector<IdentificationTrial> run_identification_benchmark(PipelineContext& ctx, const IdentificationConfig& config);

std::vector<ReportRow> aggregate(const std::vector<TrialResult>& results);
std::vector<ReportRow> aggregate(const std::vector<IdentificationTrial>& trials);

void write_report_csv(const std::vector<ReportRow>& rows, const std::string& path);
void write_report_svg(const std::vector<ReportRow>& rows, const std::string& path, const std::string& title);
void write_failures_csv(const std::vector<TrialResult>& results, const std::string& path);
std::string trial_json(const TrialResult& result);

/// report.csv, report.svg, failures.csv and trials/<method>_<task>_<seed>.json under `dir`.
std::vector<ReportRow> aggregate_and_emit(const std::vector<TrialResult>& results, const std::string& dir);

}  // namespace ocskill::eval
