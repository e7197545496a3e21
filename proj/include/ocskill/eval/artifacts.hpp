#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ocskill/eval/eval.hpp"

namespace ocskill::eval {

inline constexpr int kGoalDemoObstacles = 1;
inline constexpr std::uint64_t kBackgroundSeed = 77;
inline constexpr int kBackgroundRenders = 15;

/// On-disk layout of everything a pipeline run needs.
struct ArtifactPaths {
  std::filesystem::path root;

  std::filesystem::path encoder() const { return root / "encoder.nnc"; }
  std::filesystem::path encoder_summary() const { return root / "encoder.json"; }
  std::filesystem::path goal_demo(sim::SocketVariant t) const { return root / "demos" / (name(t) + "_goal.demo"); }
  std::filesystem::path skill_demos(sim::SocketVariant t) const { return root / "demos" / (name(t) + "_skill.demo"); }
  std::filesystem::path transition_data(sim::SocketVariant t) const { return root / "transition" / (name(t) + ".demo"); }
  std::filesystem::path transition(sim::SocketVariant t) const { return root / "transition" / (name(t) + ".nnc"); }
  std::filesystem::path agent(sim::SocketVariant t) const { return root / "skill" / (name(t) + ".nnc"); }
  std::filesystem::path agent_curve(sim::SocketVariant t) const { return root / "skill" / (name(t) + "_curve.csv"); }
  std::filesystem::path agent_summary(sim::SocketVariant t) const { return root / "skill" / (name(t) + ".json"); }
  std::filesystem::path bc(sim::SocketVariant t) const { return root / "bc" / (name(t) + ".nnc"); }
  std::filesystem::path scratch(sim::SocketVariant t) const { return root / "scratch" / (name(t) + ".nnc"); }
  std::filesystem::path scratch_curve(sim::SocketVariant t) const { return root / "scratch" / (name(t) + "_curve.csv"); }
  std::filesystem::path scratch_summary(sim::SocketVariant t) const { return root / "scratch" / (name(t) + ".json"); }

 private:
  static std::string name(sim::SocketVariant t) { return sim::to_string(t); }
};

rl::SacConfig skill_sac_config();
rl::SacConfig scratch_sac_config();
rl::SkillTrainConfig scratch_train_config(const rl::SkillTrainConfig& skill, int env_steps);

struct SkillSummary {
  int env_steps = 0;
  int episodes = 0;
  double eval_success = 0.0;
  bool reached_bar = false;
  double seconds = 0.0;
};
void save_summary(const SkillSummary& s, const std::string& path);
SkillSummary load_summary(const std::string& path);

struct PrepareConfig {
  int pretrain_scenes = 2000;
  ocgm::AeTrainConfig autoencoder;
  int skill_demos = 25;
  transition::CollectConfig transition_data;
  transition::TransitionTrainConfig transition;
  rl::SkillTrainConfig skill;
  rl::BcTrainConfig bc;
  bool scratch = true;
  std::uint64_t seed = 1;
  std::function<void(const std::string&)> log;
};

ocgm::BackgroundModel standard_background(const sim::WorldConfig& world);

/// Pretrains the patch encoder and writes it; returns the trained encoder.
ocgm::PatchEncoder prepare_encoder(const ArtifactPaths& paths, const PrepareConfig& config);
/// Demos, transition network, SAC skill, BC policy and (optionally) the scratch agent for one task.
/// The scratch agent gets the same environment-step budget as the skill.
/// Steps whose output file already exists are skipped.
void prepare_task(const ArtifactPaths& paths, const sim::WorldConfig& world, sim::SocketVariant task,
                  const PrepareConfig& config);

/// Builds a context from whatever exists under `paths`; check_models reports what is missing.
PipelineContext load_context(const ArtifactPaths& paths, const sim::WorldConfig& world,
                             const std::vector<sim::SocketVariant>& tasks);

}  // namespace ocskill::eval
