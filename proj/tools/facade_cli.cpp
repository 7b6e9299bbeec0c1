// Command-line front end: dataset synthesis, two-stage training, rendering,
// relighting, material editing, evaluation, and gradient verification.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "facade/brdf.hpp"
#include "facade/dataset.hpp"
#include "facade/mesh.hpp"
#include "facade/metrics.hpp"
#include "facade/renderer.hpp"
#include "facade/synth.hpp"
#include "facade/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace facade;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open config file " + path);
  json j;
  in >> j;
  return j;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

ModelConfig model_config(const json& root) {
  ModelConfig c;
  if (!root.contains("model")) return c;
  const json& j = root["model"];
  if (j.contains("geometry")) {
    const json& g = j["geometry"];
    c.geometry.freq_bands = get_or(g, "freq_bands", c.geometry.freq_bands);
    c.geometry.grid_levels = get_or(g, "grid_levels", c.geometry.grid_levels);
    c.geometry.grid_r_min = get_or(g, "grid_r_min", c.geometry.grid_r_min);
    c.geometry.grid_r_max = get_or(g, "grid_r_max", c.geometry.grid_r_max);
    c.geometry.grid_feature_dim = get_or(g, "grid_feature_dim", c.geometry.grid_feature_dim);
    c.geometry.z_dim = get_or(g, "z_dim", c.geometry.z_dim);
    c.geometry.hidden = get_or(g, "hidden", c.geometry.hidden);
    c.geometry.hidden_layers = get_or(g, "hidden_layers", c.geometry.hidden_layers);
  }
  auto head = [&](const char* key, HeadConfig& hc) {
    if (!j.contains(key)) return;
    const json& g = j[key];
    hc.freq_bands = get_or(g, "freq_bands", hc.freq_bands);
    hc.hidden = get_or(g, "hidden", hc.hidden);
    hc.hidden_layers = get_or(g, "hidden_layers", hc.hidden_layers);
  };
  head("diffuse", c.diffuse);
  head("specular", c.specular);
  head("material", c.material);
  c.env_lobes = get_or(j, "env_lobes", c.env_lobes);
  c.background_hidden = get_or(j, "background_hidden", c.background_hidden);
  if (j.contains("visibility")) {
    const json& v = j["visibility"];
    c.visibility.resolution = get_or(v, "resolution", c.visibility.resolution);
    c.visibility.num_lobes = get_or(v, "num_lobes", c.visibility.num_lobes);
  }
  return c;
}

Stage1Config stage1_config(const json& root) {
  Stage1Config c;
  if (!root.contains("stage1")) return c;
  const json& j = root["stage1"];
  c.steps = get_or(j, "steps", c.steps);
  c.rays_per_batch = get_or(j, "rays_per_batch", c.rays_per_batch);
  c.fg_samples = get_or(j, "fg_samples", c.fg_samples);
  c.bg_samples = get_or(j, "bg_samples", c.bg_samples);
  c.use_specular = get_or(j, "use_specular", c.use_specular);
  c.lambda_eik = get_or(j, "lambda_eik", c.lambda_eik);
  c.lambda_curv_init = get_or(j, "lambda_curv_init", c.lambda_curv_init);
  c.lambda_mask = get_or(j, "lambda_mask", c.lambda_mask);
  c.mask_warmup = get_or(j, "mask_warmup", c.mask_warmup);
  c.lambda_points = get_or(j, "lambda_points", c.lambda_points);
  c.point_batch = get_or(j, "point_batch", c.point_batch);
  c.reg_points = get_or(j, "reg_points", c.reg_points);
  c.beta_start = get_or(j, "beta_start", c.beta_start);
  c.beta_end = get_or(j, "beta_end", c.beta_end);
  c.adam.lr = get_or(j, "lr", c.adam.lr);
  c.adam.lr_decay = get_or(j, "lr_decay", c.adam.lr_decay);
  return c;
}

Stage2Config stage2_config(const json& root) {
  Stage2Config c;
  if (!root.contains("stage2")) return c;
  const json& j = root["stage2"];
  c.steps = get_or(j, "steps", c.steps);
  c.rays_per_batch = get_or(j, "rays_per_batch", c.rays_per_batch);
  c.spp = get_or(j, "spp", c.spp);
  c.sam_enabled = get_or(j, "sam_enabled", c.sam_enabled);
  c.sam_weight = get_or(j, "sam_weight", c.sam_weight);
  c.cluster_period = get_or(j, "cluster_period", c.cluster_period);
  c.cluster_samples = get_or(j, "cluster_samples", c.cluster_samples);
  c.albedo_k = get_or(j, "albedo_k", c.albedo_k);
  c.roughness_k = get_or(j, "roughness_k", c.roughness_k);
  c.metallic_k = get_or(j, "metallic_k", c.metallic_k);
  c.fit_visibility = get_or(j, "fit_visibility", c.fit_visibility);
  c.vis_fit.dirs_per_node = get_or(j, "vis_dirs_per_node", c.vis_fit.dirs_per_node);
  c.adam.lr = get_or(j, "lr", c.adam.lr);
  c.adam.lr_decay = get_or(j, "lr_decay", c.adam.lr_decay);
  return c;
}

SynthConfig synth_config(const json& root, std::uint64_t seed) {
  SynthConfig c;
  c.seed = seed;
  if (!root.contains("synth")) return c;
  const json& j = root["synth"];
  c.views = get_or(j, "views", c.views);
  c.eval_views = get_or(j, "eval_views", c.eval_views);
  c.width = get_or(j, "width", c.width);
  c.height = get_or(j, "height", c.height);
  c.spp = get_or(j, "spp", c.spp);
  c.cloud_points = get_or(j, "cloud_points", c.cloud_points);
  return c;
}

RenderConfig render_config(const json& root) {
  RenderConfig c;
  if (!root.contains("render")) return c;
  const json& j = root["render"];
  c.fg_samples = get_or(j, "fg_samples", c.fg_samples);
  c.bg_samples = get_or(j, "bg_samples", c.bg_samples);
  c.use_specular = get_or(j, "use_specular", c.use_specular);
  return c;
}

std::vector<int> parse_views(const std::string& spec, const SceneDataset& ds) {
  if (spec.empty()) return ds.eval_ids;
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

Rng pixel_rng(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return Rng(z ^ (z >> 31));
}

// Spatial material override: inside the ball, the named property is replaced.
struct MaterialOverride {
  Vec3 center = Vec3::Zero();
  real radius = 0.0;
  std::string property;  // "albedo" | "roughness" | "metallic"
  Vec3 value = Vec3::Zero();
};

std::vector<MaterialOverride> load_overrides(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open overrides file " + path);
  json j;
  in >> j;
  std::vector<MaterialOverride> out;
  for (const auto& o : j.at("overrides")) {
    MaterialOverride m;
    for (int k = 0; k < 3; ++k) m.center[k] = o.at("center")[k].get<real>();
    m.radius = o.at("radius").get<real>();
    m.property = o.at("property").get<std::string>();
    if (m.property == "albedo") {
      for (int k = 0; k < 3; ++k) m.value[k] = o.at("value")[k].get<real>();
    } else if (m.property == "roughness" || m.property == "metallic") {
      m.value[0] = o.at("value").get<real>();
    } else {
      throw DomainError("unknown override property " + m.property);
    }
    out.push_back(m);
  }
  return out;
}

// Physically based surface render of the trained model: sphere-traced
// geometry, material field, SG environment, visibility grid.
Image surface_render(const NeuralScene& scene, const Camera& cam, int spp, std::uint64_t seed,
                     const std::vector<MaterialOverride>& overrides) {
  Image img(cam.width, cam.height);
#pragma omp parallel for schedule(dynamic, 1)
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = cam.generate_ray(x + 0.5, y + 0.5);
      const auto t = sphere_trace(scene.geometry, ray.origin, ray.dir, 4.0, 1e-4);
      if (!t) {
        img.at(x, y) = scene.env.eval(ray.dir);
        continue;
      }
      const Vec3 p = ray.origin + *t * ray.dir;
      const GeometryOutput g = scene.geometry.eval(p);
      Vec3 n = scene.geometry.sdf_grad(p);
      const real nn = n.norm();
      if (nn < 1e-8) continue;
      n /= nn;
      if (n.dot(ray.dir) > 0.0) n = -n;
      const MaterialOutput m = scene.material.eval(p, g.z);
      ShadingPoint sp;
      sp.position = p;
      sp.normal = n;
      sp.omega_o = -ray.dir;
      sp.albedo = m.albedo;
      sp.roughness = m.roughness;
      sp.metallic = m.metallic;
      for (const auto& o : overrides) {
        if ((p - o.center).norm() > o.radius) continue;
        if (o.property == "albedo") sp.albedo = o.value;
        if (o.property == "roughness") sp.roughness = o.value[0];
        if (o.property == "metallic") sp.metallic = o.value[0];
      }
      Rng rng = pixel_rng(seed, static_cast<std::uint64_t>(y) * cam.width + x);
      img.at(x, y) = shade(sp, scene.env, &scene.visibility, spp, rng).color;
    }
  }
  return img;
}

void write_view(const fs::path& dir, const std::string& stem, const Image& img) {
  fs::create_directories(dir);
  write_exr((dir / (stem + ".exr")).string(), img);
  write_png_preview((dir / (stem + ".png")).string(), img);
}

struct CommonArgs {
  std::string config, checkpoint, out, views, mask_dir;
  std::uint64_t seed = 1;
  int spp = 0;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "JSON run configuration");
  cmd->add_option("--checkpoint", a.checkpoint, "model checkpoint file");
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--seed", a.seed, "rng seed");
  cmd->add_option("--views", a.views, "comma-separated view indices");
  cmd->add_option("--spp", a.spp, "shading samples per pixel");
  cmd->add_option("--mask-dir", a.mask_dir, "instance mask directory");
}

SceneDataset dataset_from(const json& cfg, const CommonArgs& a) {
  if (!cfg.contains("dataset")) throw DomainError("config lacks a \"dataset\" path");
  return load_dataset(cfg["dataset"].get<std::string>(), a.mask_dir);
}

int run(int argc, char** argv) {
  CLI::App app{"Neural inverse rendering pipeline"};
  app.require_subcommand(1);

  CommonArgs synth_a, tg_a, tm_a, render_a, relight_a, edit_a, eval_a, gc_a;
  std::string envmap_path, overrides_path;

  auto* c_synth = app.add_subcommand("synth", "generate the synthetic benchmark dataset");
  add_common(c_synth, synth_a);
  auto* c_tg = app.add_subcommand("train-geometry", "stage 1: geometry and radiance");
  add_common(c_tg, tg_a);
  auto* c_tm = app.add_subcommand("train-material", "stage 2: material, light, visibility");
  add_common(c_tm, tm_a);
  auto* c_render = app.add_subcommand("render", "volume-render views from a checkpoint");
  add_common(c_render, render_a);
  auto* c_relight = app.add_subcommand("relight", "render under a replacement environment map");
  c_relight->add_option("envmap", envmap_path, "equirectangular EXR environment")->required();
  add_common(c_relight, relight_a);
  auto* c_edit = app.add_subcommand("edit-material", "render with material overrides");
  c_edit->add_option("overrides", overrides_path, "JSON override description")->required();
  add_common(c_edit, edit_a);
  auto* c_eval = app.add_subcommand("eval", "metrics report against the dataset");
  add_common(c_eval, eval_a);
  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(c_gc, gc_a);

  CLI11_PARSE(app, argc, argv);

  if (c_synth->parsed()) {
    if (synth_a.out.empty()) throw DomainError("synth requires --out");
    const json cfg = load_config(synth_a.config);
    SynthConfig sc = synth_config(cfg, synth_a.seed);
    if (synth_a.spp > 0) sc.spp = synth_a.spp;
    synth_scene(benchmark_scene(), sc, synth_a.out);
    std::cout << "wrote dataset to " << synth_a.out << "\n";
  } else if (c_tg->parsed()) {
    if (tg_a.out.empty()) throw DomainError("train-geometry requires --out");
    const json cfg = load_config(tg_a.config);
    const SceneDataset ds = dataset_from(cfg, tg_a);
    Rng rng(tg_a.seed);
    NeuralScene scene(model_config(cfg), rng);
    scene.geometry.sphere_init(0.5, get_or(cfg, "sphere_init_steps", 300), rng);
    Trainer trainer(scene, ds, tg_a.seed);
    trainer.begin_stage1(stage1_config(cfg));
    if (!tg_a.checkpoint.empty()) trainer.restore(tg_a.checkpoint);
    const Stage1Config s1 = stage1_config(cfg);
    for (int i = trainer.step_index(); i < s1.steps; ++i) {
      const LossBreakdown r = trainer.stage1_step();
      if (i % 50 == 0)
        std::cout << "step " << i << " total " << r.total << " color " << r.color << "\n";
    }
    fs::create_directories(tg_a.out);
    trainer.save((fs::path(tg_a.out) / "stage1.ckpt").string());
    trainer.write_loss_csv((fs::path(tg_a.out) / "stage1_loss.csv").string());
  } else if (c_tm->parsed()) {
    if (tm_a.out.empty() || tm_a.checkpoint.empty())
      throw DomainError("train-material requires --checkpoint and --out");
    const json cfg = load_config(tm_a.config);
    const SceneDataset ds = dataset_from(cfg, tm_a);
    NeuralScene scene = load_checkpoint(tm_a.checkpoint);
    Trainer trainer(scene, ds, tm_a.seed);
    const Stage2Config s2 = stage2_config(cfg);
    trainer.begin_stage2(s2);
    for (int i = 0; i < s2.steps; ++i) {
      const LossBreakdown r = trainer.stage2_step();
      if (i % 50 == 0)
        std::cout << "step " << i << " total " << r.total << " color " << r.color << "\n";
    }
    fs::create_directories(tm_a.out);
    trainer.save((fs::path(tm_a.out) / "stage2.ckpt").string());
    trainer.write_loss_csv((fs::path(tm_a.out) / "stage2_loss.csv").string());
  } else if (c_render->parsed()) {
    if (render_a.out.empty() || render_a.checkpoint.empty())
      throw DomainError("render requires --checkpoint and --out");
    const json cfg = load_config(render_a.config);
    const SceneDataset ds = dataset_from(cfg, render_a);
    const NeuralScene scene = load_checkpoint(render_a.checkpoint);
    const RenderConfig rc = render_config(cfg);
    for (const int vi : parse_views(render_a.views, ds)) {
      const Image img = render_image(scene, ds.view(vi).camera, rc);
      char stem[64];
      std::snprintf(stem, sizeof(stem), "render_%03d", vi);
      write_view(render_a.out, stem, img);
    }
  } else if (c_relight->parsed()) {
    if (relight_a.out.empty() || relight_a.checkpoint.empty())
      throw DomainError("relight requires --checkpoint and --out");
    const json cfg = load_config(relight_a.config);
    const SceneDataset ds = dataset_from(cfg, relight_a);
    NeuralScene scene = load_checkpoint(relight_a.checkpoint);
    scene.env = fit_environment(read_exr(envmap_path), scene.config.env_lobes);
    const int spp = relight_a.spp > 0 ? relight_a.spp : 64;
    for (const int vi : parse_views(relight_a.views, ds)) {
      const Image img = surface_render(scene, ds.view(vi).camera, spp, relight_a.seed, {});
      char stem[64];
      std::snprintf(stem, sizeof(stem), "relight_%03d", vi);
      write_view(relight_a.out, stem, img);
    }
  } else if (c_edit->parsed()) {
    if (edit_a.out.empty() || edit_a.checkpoint.empty())
      throw DomainError("edit-material requires --checkpoint and --out");
    const json cfg = load_config(edit_a.config);
    const SceneDataset ds = dataset_from(cfg, edit_a);
    const NeuralScene scene = load_checkpoint(edit_a.checkpoint);
    const auto overrides = load_overrides(overrides_path);
    const int spp = edit_a.spp > 0 ? edit_a.spp : 64;
    for (const int vi : parse_views(edit_a.views, ds)) {
      const Image base = surface_render(scene, ds.view(vi).camera, spp, edit_a.seed, {});
      const Image edited = surface_render(scene, ds.view(vi).camera, spp, edit_a.seed, overrides);
      char stem[64];
      std::snprintf(stem, sizeof(stem), "edit_%03d", vi);
      write_view(edit_a.out, std::string("base_") + &stem[5], base);
      write_view(edit_a.out, stem, edited);
    }
  } else if (c_eval->parsed()) {
    if (eval_a.out.empty() || eval_a.checkpoint.empty())
      throw DomainError("eval requires --checkpoint and --out");
    const json cfg = load_config(eval_a.config);
    const SceneDataset ds = dataset_from(cfg, eval_a);
    const NeuralScene scene = load_checkpoint(eval_a.checkpoint);
    const RenderConfig rc = render_config(cfg);
    json report;
    real mean_psnr = 0.0;
    int count = 0;
    for (const int vi : parse_views(eval_a.views, ds)) {
      const auto& view = ds.view(vi);
      const Image img = render_image(scene, view.camera, rc);
      const PsnrResult p = psnr(img, view.image, view.mask ? &*view.mask : nullptr);
      report["psnr_per_view"][view.name] = p.infinite ? 1e9 : p.db;
      mean_psnr += p.infinite ? 1e9 : p.db;
      ++count;
    }
    if (count > 0) report["psnr_mean"] = mean_psnr / count;
    if (!ds.points.empty()) {
      const auto field = [&](const Vec3& x) { return scene.geometry.sdf(x); };
      const TriangleMesh mesh =
          extract_mesh(field, get_or(cfg, "mesh_resolution", 96), Vec3::Constant(-1.0),
                       Vec3::Constant(1.0));
      if (!mesh.empty()) {
        Rng rng(eval_a.seed);
        const auto pts = sample_mesh_points(mesh, 20000, rng);
        const ChamferResult ch = chamfer_distance(pts, ds.points);
        report["chamfer"] = ch.mean;
        report["chamfer_pred_to_ref"] = ch.pred_to_ref;
        report["chamfer_ref_to_pred"] = ch.ref_to_pred;
      } else {
        report["chamfer"] = nullptr;
      }
    }
    fs::create_directories(eval_a.out);
    std::ofstream out(fs::path(eval_a.out) / "metrics.json");
    out << report.dump(2) << "\n";
    std::cout << report.dump(2) << "\n";
  } else if (c_gc->parsed()) {
    const auto reports = run_gradient_checks(gc_a.seed);
    bool all_ok = true;
    for (const auto& r : reports) {
      std::cout << (r.ok ? "PASS " : "FAIL ") << r.name << " max_rel_error=" << r.max_rel_error
                << "\n";
      all_ok = all_ok && r.ok;
    }
    if (!all_ok) throw DomainError("gradient checks failed");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
