#include "ocskill/ocgm/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>

#include "ocskill/errors.hpp"

namespace ocskill::ocgm {

using sim::Color;
using sim::ObjectSpec;
using sim::Vec2;

const std::vector<Color>& primitive_palette() {
  static const std::vector<Color> palette = {
      {200, 40, 40},  {220, 200, 40},  {40, 190, 200},  {40, 75, 215},  {50, 180, 75},   {90, 90, 90},
      {230, 120, 170}, {140, 90, 50},  {235, 140, 30},  {150, 60, 180}, {235, 235, 235}, {20, 110, 110},
  };
  return palette;
}

sim::CameraModel jittered_camera(int image_size, Vec2 jitter) {
  sim::CameraModel cam;
  const double s = image_size;
  cam.image_size = image_size;
  cam.affine = {s, 0.0, -s * jitter.x, 0.0, -s, s + s * jitter.y};
  return cam;
}

PretrainDataset generate_pretraining_set(int n_scenes, std::uint64_t seed, double jitter_bound, int image_size) {
  if (n_scenes < 1) throw ConfigError("generate_pretraining_set: n_scenes must be >= 1");
  PretrainDataset ds;
  ds.seed = seed;
  ds.jitter_bound = jitter_bound;
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  const auto& palette = primitive_palette();
  const double margin = 0.03;  // exceeds the jitter bound, so nothing leaves the frame
  const double gap = 0.03;

  for (int k = 0; k < n_scenes; ++k) {
    PretrainScene scene;
    scene.jitter = {uni(-jitter_bound, jitter_bound), uni(-jitter_bound, jitter_bound)};
    const int n_obj = 2 + pick(5);
    int attempts = 0;
    while (static_cast<int>(scene.objects.size()) < n_obj && attempts < 2000) {
      ++attempts;
      ObjectSpec o;
      o.color = palette[static_cast<std::size_t>(pick(static_cast<int>(palette.size())))];
      switch (pick(3)) {
        case 0:
          o.shape = sim::ShapeKind::rect;
          o.size = {uni(0.03, 0.16), uni(0.03, 0.16)};
          break;
        case 1: {
          o.shape = sim::ShapeKind::disc;
          const double d = uni(0.04, 0.12);
          o.size = {d, d};
          break;
        }
        default:
          o.kind = sim::ObjectKind::socket;
          o.shape = sim::ShapeKind::rect;
          o.size = {uni(0.08, 0.14), uni(0.03, 0.05)};
          o.hole_tolerance = pick(2) ? 0.008 : 0.010;
          o.hole_offset = uni(-0.015, 0.015);
          o.hole_depth = 0.02;
          break;
      }
      const Vec2 ext = o.bounds().size;
      o.center = {uni(margin + 0.5 * ext.x, 1.0 - margin - 0.5 * ext.x),
                  uni(margin + 0.5 * ext.y, 1.0 - margin - 0.5 * ext.y)};
      bool ok = true;
      for (const auto& other : scene.objects) ok = ok && !o.bounds().overlaps(other.bounds(), gap);
      if (ok) scene.objects.push_back(o);
    }
    scene.image = sim::render_objects(scene.objects, jittered_camera(image_size, scene.jitter), 0.012);
    ds.scenes.push_back(std::move(scene));
  }
  return ds;
}

void write_ppm(const sim::Image& img, const std::string& path) {
  if (img.channels != 3 && img.channels != 1) throw UsageError("write_ppm: 1 or 3 channels required");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

sim::Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  if ((magic != "P6" && magic != "P5") || w <= 0 || h <= 0 || maxval != 255) throw IoError("unsupported image " + path);
  sim::Image img(h, w, magic == "P6" ? 3 : 1);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw IoError("truncated image " + path);
  return img;
}

namespace {

nlohmann::json object_json(const ObjectSpec& o) {
  return {{"shape", o.shape == sim::ShapeKind::disc ? "disc" : "rect"},
          {"slotted", o.kind == sim::ObjectKind::socket},
          {"center", {o.center.x, o.center.y}},
          {"size", {o.size.x, o.size.y}},
          {"color", {o.color[0], o.color[1], o.color[2]}},
          {"hole_offset", o.hole_offset},
          {"hole_tolerance", o.hole_tolerance},
          {"hole_depth", o.hole_depth}};
}

ObjectSpec object_from_json(const nlohmann::json& j) {
  ObjectSpec o;
  o.shape = j.at("shape").get<std::string>() == "disc" ? sim::ShapeKind::disc : sim::ShapeKind::rect;
  o.kind = j.at("slotted").get<bool>() ? sim::ObjectKind::socket : sim::ObjectKind::obstacle;
  o.center = {j.at("center")[0].get<double>(), j.at("center")[1].get<double>()};
  o.size = {j.at("size")[0].get<double>(), j.at("size")[1].get<double>()};
  for (int c = 0; c < 3; ++c) o.color[static_cast<std::size_t>(c)] = j.at("color")[static_cast<std::size_t>(c)].get<std::uint8_t>();
  o.hole_offset = j.at("hole_offset").get<double>();
  o.hole_tolerance = j.at("hole_tolerance").get<double>();
  o.hole_depth = j.at("hole_depth").get<double>();
  return o;
}

}  // namespace

void save_pretraining_set(const PretrainDataset& dataset, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "ppm";
  manifest["count"] = dataset.count();
  manifest["seed"] = dataset.seed;
  manifest["jitter_bound"] = dataset.jitter_bound;
  manifest["scenes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < dataset.scenes.size(); ++i) {
    const auto& s = dataset.scenes[i];
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%05zu.ppm", i);
    write_ppm(s.image, (fs::path(dir) / name).string());
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : s.objects) objs.push_back(object_json(o));
    manifest["scenes"].push_back({{"file", name}, {"jitter", {s.jitter.x, s.jitter.y}}, {"objects", objs}});
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir);
  out << manifest.dump(1) << "\n";
}

PretrainDataset load_pretraining_set(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw ConfigError("no manifest.json in " + dir);
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  PretrainDataset ds;
  ds.seed = m.at("seed").get<std::uint64_t>();
  ds.jitter_bound = m.at("jitter_bound").get<double>();
  for (const auto& s : m.at("scenes")) {
    PretrainScene scene;
    scene.image = read_ppm((fs::path(dir) / s.at("file").get<std::string>()).string());
    scene.jitter = {s.at("jitter")[0].get<double>(), s.at("jitter")[1].get<double>()};
    for (const auto& o : s.at("objects")) scene.objects.push_back(object_from_json(o));
    ds.scenes.push_back(std::move(scene));
  }
  if (ds.count() != m.at("count").get<std::size_t>()) throw IoError("manifest count does not match scene list");
  return ds;
}

}  // namespace ocskill::ocgm
