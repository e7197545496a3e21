#include <cmath>
#include <limits>
#include <random>

#include "ocskill/errors.hpp"
#include "ocskill/eval/eval.hpp"
#include "ocskill/sim/render.hpp"

namespace ocskill::eval {

Template template_from_demo(const sim::WorldConfig& world, const sim::Demonstration& goal_demo, int n_obstacles) {
  if (goal_demo.frames.empty() || !goal_demo.frames.front().external) {
    throw ConfigError("goal demonstration has no external first frame");
  }
  const auto& img = *goal_demo.frames.front().external;
  const auto box = socket_box(sim::reset_scene(world, goal_demo.seed, goal_demo.task, n_obstacles));
  const int x0 = std::max(0, static_cast<int>(std::floor(box[0])));
  const int y0 = std::max(0, static_cast<int>(std::floor(box[1])));
  const int x1 = std::min(img.width, static_cast<int>(std::ceil(box[0] + box[2])));
  const int y1 = std::min(img.height, static_cast<int>(std::ceil(box[1] + box[3])));
  if (x1 - x0 < 2 || y1 - y0 < 2) throw ConfigError("goal demo socket crop is degenerate");
  Template t;
  t.patch = sim::Image(y1 - y0, x1 - x0, img.channels);
  for (int i = y0; i < y1; ++i)
    for (int j = x0; j < x1; ++j)
      for (int c = 0; c < img.channels; ++c) t.patch.at(i - y0, j - x0, c) = img.at(i, j, c);
  return t;
}

std::array<double, 4> match_template(const sim::Image& scene, const Template& tmpl) {
  const auto& p = tmpl.patch;
  if (p.channels != scene.channels || p.height > scene.height || p.width > scene.width) {
    throw ConfigError("template does not fit the scene");
  }
  const int n = p.height * p.width * p.channels;
  double tmean = 0.0;
  for (auto v : p.pixels) tmean += v;
  tmean /= n;
  std::vector<double> tz(p.pixels.size());
  double tnorm = 0.0;
  for (std::size_t k = 0; k < tz.size(); ++k) {
    tz[k] = p.pixels[k] - tmean;
    tnorm += tz[k] * tz[k];
  }
  double best = -std::numeric_limits<double>::infinity();
  int bx = 0, by = 0;
  for (int y = 0; y + p.height <= scene.height; ++y) {
    for (int x = 0; x + p.width <= scene.width; ++x) {
      double smean = 0.0;
      for (int i = 0; i < p.height; ++i)
        for (int j = 0; j < p.width; ++j)
          for (int c = 0; c < p.channels; ++c) smean += scene.at(y + i, x + j, c);
      smean /= n;
      double dot = 0.0, snorm = 0.0;
      std::size_t k = 0;
      for (int i = 0; i < p.height; ++i)
        for (int j = 0; j < p.width; ++j)
          for (int c = 0; c < p.channels; ++c, ++k) {
            const double s = scene.at(y + i, x + j, c) - smean;
            dot += s * tz[k];
            snorm += s * s;
          }
      const double ncc = snorm > 0.0 && tnorm > 0.0 ? dot / std::sqrt(snorm * tnorm) : 0.0;
      if (ncc > best) {
        best = ncc;
        bx = x;
        by = y;
      }
    }
  }
  return {static_cast<double>(bx), static_cast<double>(by), static_cast<double>(p.width), static_cast<double>(p.height)};
}

std::vector<IdentificationTrial> run_identification_benchmark(PipelineContext& ctx, const IdentificationConfig& config) {
  if (config.min_distractors < 0 || config.max_distractors < config.min_distractors) {
    throw ConfigError("invalid distractor range");
  }
  std::vector<IdentificationTrial> out;
  for (auto task : config.tasks) {
    const auto it = ctx.tasks.find(task);
    if (it == ctx.tasks.end() || it->second.goal.z_what_target.empty() || !it->second.goal_template) {
      throw ConfigError("identification benchmark needs a goal specification and template for " + sim::to_string(task));
    }
    std::mt19937_64 rng(config.seed ^ (0x51ed27ULL * (static_cast<std::uint64_t>(task) + 1)));
    const int span = config.max_distractors - config.min_distractors + 1;
    for (int k = 0; k < config.scenes_per_task; ++k) {
      const std::uint64_t seed = rng();
      const auto state = sim::reset_scene(ctx.world, seed, task, config.min_distractors + k % span);
      const auto image = sim::render_external(ctx.world, state);
      const auto truth = socket_box(state);

      IdentificationTrial ocgm_trial{"OCGM", task, seed, 0.0, false};
      try {
        const auto dec = ocgm::discover_objects(image, ctx.background, &ctx.encoder);
        const auto& s = dec.slots[static_cast<std::size_t>(mp::reidentify(it->second.goal.z_what_target, dec))];
        ocgm_trial.iou = iou({s.z_where[0] - 0.5 * s.z_where[2], s.z_where[1] - 0.5 * s.z_where[3], s.z_where[2],
                              s.z_where[3]},
                             truth);
      } catch (const IdentificationError&) {
      }
      ocgm_trial.success = ocgm_trial.iou > 0.5;
      out.push_back(ocgm_trial);

      IdentificationTrial tm{"Template", task, seed, iou(match_template(image, *it->second.goal_template), truth), false};
      tm.success = tm.iou > 0.5;
      out.push_back(tm);
    }
  }
  return out;
}

}  // namespace ocskill::eval
