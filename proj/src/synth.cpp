#include "facade/synth.hpp"

#include <cstdio>
#include <filesystem>
#include <set>

namespace fs = std::filesystem;

namespace facade {

namespace {

// Per-pixel stream seeded independently of the pixel visiting order.
Rng pixel_rng(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return Rng(z ^ (z >> 31));
}

SgMixture make_mixture(const std::vector<SgLobe>& lobes) {
  SgMixture m(static_cast<int>(lobes.size()));
  for (std::size_t i = 0; i < lobes.size(); ++i) {
    real* raw = m.theta().data() + i * kSgLobeParams;
    const Vec3 ax = lobes[i].axis.normalized();
    raw[0] = ax.x();
    raw[1] = ax.y();
    raw[2] = ax.z();
    raw[3] = std::log(lobes[i].sharpness);
    for (int c = 0; c < 3; ++c)
      raw[4 + c] = softplus_inverse(std::max(lobes[i].amplitude[c], 1e-9));
  }
  return m;
}

// Cook-Torrance pieces, written independently of the differentiable path.
real ndf_ggx(real ndh, real alpha) {
  const real a2 = alpha * alpha;
  const real d = ndh * ndh * (a2 - 1.0) + 1.0;
  return a2 / (kPi * d * d);
}

real smith_g1(real c, real a2) {
  return 2.0 * c / (c + std::sqrt(a2 + (1.0 - a2) * c * c));
}

Vec3 ct_eval(const ScenePrimitive& prim, const Vec3& n, const Vec3& wo, const Vec3& wi) {
  const real ndl = n.dot(wi);
  const real ndv = n.dot(wo);
  if (ndl <= 0.0 || ndv <= 0.0) return Vec3::Zero();
  const Vec3 h = (wo + wi).normalized();
  const real ndh = std::max(n.dot(h), 0.0);
  const real voh = std::max(wo.dot(h), 1e-8);
  const real alpha = prim.roughness * prim.roughness;
  const real a2 = alpha * alpha;
  const Vec3 f0 = Vec3::Constant(0.04) * (1.0 - prim.metallic) + prim.albedo * prim.metallic;
  const real sch = std::pow(1.0 - voh, 5.0);
  const Vec3 fresnel = f0 + (Vec3::Ones() - f0) * sch;
  const real denom = std::max(4.0 * ndv * ndl, 1e-7);
  const Vec3 spec = fresnel * (ndf_ggx(ndh, alpha) * smith_g1(ndv, a2) * smith_g1(ndl, a2) / denom);
  const Vec3 diff = (1.0 - prim.metallic) * prim.albedo / kPi;
  return diff + spec;
}

real mix_pdf(const ScenePrimitive& prim, const Vec3& n, const Vec3& wo, const Vec3& wi) {
  const real ndl = n.dot(wi);
  if (ndl <= 0.0) return 0.0;
  const Vec3 h = (wo + wi).normalized();
  const real ndh = std::max(n.dot(h), 0.0);
  const real voh = std::max(wo.dot(h), 1e-8);
  const real alpha = std::max(prim.roughness * prim.roughness, 1e-4);
  return 0.5 * ndl / kPi + 0.5 * ndf_ggx(ndh, alpha) * ndh / (4.0 * voh);
}

}  // namespace

real AnalyticScene::sdf(const Vec3& x) const {
  real s = 1e9;
  for (const auto& p : primitives) s = std::min(s, p.sdf->sdf(x));
  return s;
}

int AnalyticScene::nearest(const Vec3& x) const {
  real s = 1e9;
  int best = -1;
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const real si = primitives[i].sdf->sdf(x);
    if (si < s) {
      s = si;
      best = static_cast<int>(i);
    }
  }
  return best;
}

Vec3 AnalyticScene::normal(const Vec3& x) const {
  const int i = nearest(x);
  if (i < 0) throw DomainError("AnalyticScene::normal: empty scene");
  return primitives[static_cast<std::size_t>(i)].sdf->sdf_grad(x).normalized();
}

SgMixture constant_environment(const Vec3& value) {
  SgLobe lobe;
  lobe.axis = Vec3::UnitZ();
  lobe.sharpness = std::exp(-10.0);  // flat to within ~1e-4 relative
  lobe.amplitude = value;
  return make_mixture({lobe});
}

AnalyticScene benchmark_scene() {
  AnalyticScene scene;
  // Thin ground slab; everything rests on its top face at z = -0.35.
  scene.primitives.push_back({std::make_shared<BoxSdf>(Vec3(0.0, 0.0, -0.38), Vec3(0.48, 0.48, 0.03)),
                              Vec3(0.42, 0.40, 0.38), 0.7, 0.0});
  scene.primitives.push_back({std::make_shared<SphereSdf>(Vec3(-0.25, 0.10, -0.17), 0.18),
                              Vec3(0.70, 0.25, 0.20), 0.9, 0.0});
  scene.primitives.push_back({std::make_shared<SphereSdf>(Vec3(0.26, -0.12, -0.17), 0.18),
                              Vec3(0.20, 0.35, 0.75), 0.15, 0.0});
  scene.primitives.push_back({std::make_shared<BoxSdf>(Vec3(0.0, 0.28, -0.23), Vec3(0.12, 0.10, 0.12)),
                              Vec3(0.75, 0.65, 0.25), 0.5, 0.0});

  SgLobe sun;
  sun.axis = Vec3(0.3, 0.2, 0.9);
  sun.sharpness = 4.0;
  sun.amplitude = Vec3(1.2, 1.1, 1.0);
  SgLobe fill;
  fill.axis = Vec3(-0.5, -0.3, 0.5);
  fill.sharpness = 2.0;
  fill.amplitude = Vec3(0.35, 0.40, 0.50);
  SgLobe bounce;
  bounce.axis = Vec3(0.0, 0.0, -1.0);
  bounce.sharpness = 1.5;
  bounce.amplitude = Vec3(0.25, 0.22, 0.20);
  scene.env = make_mixture({sun, fill, bounce});
  return scene;
}

std::optional<real> sphere_trace(const SdfField& field, const Vec3& o, const Vec3& d, real t_max,
                                 real eps) {
  real t = 1e-3;
  for (int i = 0; i < 512 && t < t_max; ++i) {
    const real s = field.sdf(o + t * d);
    if (s < eps) return t;
    t += s;
  }
  return std::nullopt;
}

namespace {

struct SceneSdfView final : SdfField {
  const AnalyticScene* scene;
  explicit SceneSdfView(const AnalyticScene& s) : scene(&s) {}
  real sdf(const Vec3& x) const override { return scene->sdf(x); }
};

}  // namespace

Vec3 oracle_shade(const AnalyticScene& scene, const Vec3& x, const Vec3& n, const Vec3& omega_o,
                  const ScenePrimitive& prim, int spp, Rng& rng, bool shadows) {
  const SceneSdfView view(scene);
  Vec3 t, b;
  build_frame(n, t, b);
  const real alpha = std::max(prim.roughness * prim.roughness, 1e-4);
  Vec3 sum = Vec3::Zero();
  for (int s = 0; s < spp; ++s) {
    const real pick = uniform(rng);
    const real u1 = uniform(rng);
    const real u2 = uniform(rng);
    Vec3 wi;
    if (pick < 0.5) {
      const real r = std::sqrt(u1);
      const real phi = 2.0 * kPi * u2;
      const Vec3 local(r * std::cos(phi), r * std::sin(phi), std::sqrt(std::max(0.0, 1.0 - u1)));
      wi = local.x() * t + local.y() * b + local.z() * n;
    } else {
      const real cos_h = std::sqrt((1.0 - u1) / (1.0 + (alpha * alpha - 1.0) * u1));
      const real sin_h = std::sqrt(std::max(0.0, 1.0 - cos_h * cos_h));
      const real phi = 2.0 * kPi * u2;
      const Vec3 h = sin_h * std::cos(phi) * t + sin_h * std::sin(phi) * b + cos_h * n;
      wi = 2.0 * omega_o.dot(h) * h - omega_o;
    }
    if (n.dot(wi) <= 0.0) continue;
    const real pdf = mix_pdf(prim, n, omega_o, wi);
    if (pdf < 1e-9) continue;
    if (shadows && sphere_trace(view, x + 1e-3 * n, wi, 3.0)) continue;
    const Vec3 f = ct_eval(prim, n, omega_o, wi);
    sum += scene.env.eval(wi).cwiseProduct(f) * (n.dot(wi) / pdf);
  }
  return sum / static_cast<real>(spp);
}

Camera synth_camera(const SynthConfig& cfg, int view_index) {
  const Vec3 d = sphere_sequence_dir(static_cast<std::size_t>(view_index));
  const real z = 0.25 + 0.65 * 0.5 * (d.z() + 1.0);
  const real rxy = std::sqrt(std::max(1e-12, 1.0 - z * z));
  Vec2 xy(d.x(), d.y());
  if (xy.norm() < 1e-9) xy = Vec2(1.0, 0.0);
  xy.normalize();
  const Vec3 pos = cfg.camera_radius * Vec3(rxy * xy.x(), rxy * xy.y(), z);

  Camera cam;
  cam.width = cfg.width;
  cam.height = cfg.height;
  cam.fx = cam.fy = 0.5 * cfg.width / std::tan(0.5 * cfg.fov_deg * kPi / 180.0);
  cam.cx = 0.5 * cfg.width;
  cam.cy = 0.5 * cfg.height;

  const Vec3 forward = (-pos).normalized();
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-6) right = orthonormal(forward);
  right.normalize();
  const Vec3 down = forward.cross(right);  // image y grows downward
  cam.cam_to_world.block<3, 1>(0, 0) = right;
  cam.cam_to_world.block<3, 1>(0, 1) = down;
  cam.cam_to_world.block<3, 1>(0, 2) = forward;
  cam.cam_to_world.block<3, 1>(0, 3) = pos;
  return cam;
}

Image oracle_render(const AnalyticScene& scene, const Camera& cam, int spp, std::uint64_t seed,
                    GroundTruthMaps* gt, bool parallel) {
  const SceneSdfView view(scene);
  Image img(cam.width, cam.height);
  if (gt) {
    gt->depth = ScalarImage(cam.width, cam.height);
    gt->normal = Image(cam.width, cam.height);
    gt->albedo = Image(cam.width, cam.height);
    gt->roughness = ScalarImage(cam.width, cam.height);
    gt->metallic = ScalarImage(cam.width, cam.height);
    gt->instance = LabelImage(cam.width, cam.height);
  }
#pragma omp parallel for schedule(static) if (parallel)
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = cam.generate_ray(x + 0.5, y + 0.5);
      const auto hit = sphere_trace(view, ray.origin, ray.dir, 8.0);
      if (!hit) {
        img.at(x, y) = scene.env.eval(ray.dir);
        continue;
      }
      const Vec3 p = ray.origin + *hit * ray.dir;
      const int prim_id = scene.nearest(p);
      const auto& prim = scene.primitives[static_cast<std::size_t>(prim_id)];
      Vec3 n = prim.sdf->sdf_grad(p).normalized();
      if (n.dot(ray.dir) > 0.0) n = -n;
      Rng rng = pixel_rng(seed, static_cast<std::uint64_t>(y) * cam.width + x);
      img.at(x, y) = oracle_shade(scene, p, n, -ray.dir, prim, spp, rng);
      if (gt) {
        gt->depth.at(x, y) = *hit;
        gt->normal.at(x, y) = n;
        gt->albedo.at(x, y) = prim.albedo;
        gt->roughness.at(x, y) = prim.roughness;
        gt->metallic.at(x, y) = prim.metallic;
        gt->instance.at(x, y) = prim_id;
      }
    }
  }
  return img;
}

std::vector<Vec3> sample_surface_points(const AnalyticScene& scene, int count, Rng& rng) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(count));
  long attempts = 0;
  const long max_attempts = 400L * count;
  while (static_cast<int>(pts.size()) < count && attempts++ < max_attempts) {
    Vec3 x(uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8));
    real s = scene.sdf(x);
    if (std::abs(s) > 0.3) continue;
    bool ok = false;
    for (int it = 0; it < 12; ++it) {
      const Vec3 n = scene.normal(x);
      x -= s * n;
      s = scene.sdf(x);
      if (std::abs(s) < 1e-7) {
        ok = true;
        break;
      }
    }
    if (ok) pts.push_back(x);
  }
  if (static_cast<int>(pts.size()) < count)
    throw DomainError("sample_surface_points: projection kept failing");
  return pts;
}

SceneDataset synth_scene(const AnalyticScene& scene, const SynthConfig& cfg,
                         const std::string& out_dir, std::vector<GroundTruthMaps>* gt_out) {
  SceneDataset ds;
  std::vector<GroundTruthMaps> gts(static_cast<std::size_t>(cfg.views));
  for (int i = 0; i < cfg.views; ++i) {
    DatasetView v;
    char name[64];
    std::snprintf(name, sizeof(name), "view_%03d.exr", i);
    v.name = name;
    v.camera = synth_camera(cfg, i);
    v.image = oracle_render(scene, v.camera, cfg.spp, cfg.seed + static_cast<std::uint64_t>(i),
                            &gts[static_cast<std::size_t>(i)]);
    v.mask = gts[static_cast<std::size_t>(i)].instance;
    ds.views.push_back(std::move(v));
  }
  for (int i = 0; i < cfg.eval_views; ++i)
    ds.eval_ids.push_back(i * cfg.views / std::max(1, cfg.eval_views));
  std::set<int> ev(ds.eval_ids.begin(), ds.eval_ids.end());
  for (int i = 0; i < cfg.views; ++i)
    if (!ev.count(i)) ds.train_ids.push_back(i);

  Rng rng(cfg.seed + 7919);
  ds.points = sample_surface_points(scene, cfg.cloud_points, rng);

  if (!out_dir.empty()) {
    save_dataset(out_dir, ds);
    const fs::path gt_dir = fs::path(out_dir) / "gt";
    const fs::path prev_dir = fs::path(out_dir) / "previews";
    fs::create_directories(gt_dir);
    fs::create_directories(prev_dir);
    for (int i = 0; i < cfg.views; ++i) {
      char suffix[64];
      std::snprintf(suffix, sizeof(suffix), "_%03d.exr", i);
      const auto& g = gts[static_cast<std::size_t>(i)];
      write_exr_scalar((gt_dir / ("depth" + std::string(suffix))).string(), g.depth);
      write_exr((gt_dir / ("normal" + std::string(suffix))).string(), g.normal);
      write_exr((gt_dir / ("albedo" + std::string(suffix))).string(), g.albedo);
      write_exr_scalar((gt_dir / ("roughness" + std::string(suffix))).string(), g.roughness);
      write_exr_scalar((gt_dir / ("metallic" + std::string(suffix))).string(), g.metallic);
      char png[64];
      std::snprintf(png, sizeof(png), "view_%03d.png", i);
      write_png_preview((prev_dir / png).string(), ds.views[static_cast<std::size_t>(i)].image);
    }
  }
  if (gt_out) *gt_out = std::move(gts);
  return ds;
}

}  // namespace facade
