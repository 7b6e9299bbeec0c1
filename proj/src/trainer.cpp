#include "facade/trainer.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "facade/brdf.hpp"
#include "facade/renderer.hpp"
#include "facade/synth.hpp"

using json = nlohmann::json;

namespace facade {

real lambda_schedule(int epoch, int total, bool high_kappa, real low_fraction) {
  if (total <= 0) return 0.0;
  if (epoch > total) throw DomainError("lambda_schedule: epoch beyond total");
  const real horizon = high_kappa ? static_cast<real>(total)
                                  : std::max(1.0, low_fraction * static_cast<real>(total));
  return std::max(0.0, 1.0 - static_cast<real>(epoch) / horizon);
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "FCKP1\n";

void write_string(std::ostream& out, const std::string& s) {
  const std::uint64_t n = s.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(s.data(), static_cast<std::streamsize>(n));
}

std::string read_string(std::istream& in) {
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

void write_vec(std::ostream& out, const VecX& v) {
  const std::uint64_t n = static_cast<std::uint64_t>(v.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(real)));
}

VecX read_vec(std::istream& in) {
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  VecX v(static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(real)));
  return v;
}

json config_to_json(const ModelConfig& c) {
  json j;
  j["geometry"] = {{"freq_bands", c.geometry.freq_bands},
                   {"grid_levels", c.geometry.grid_levels},
                   {"grid_r_min", c.geometry.grid_r_min},
                   {"grid_r_max", c.geometry.grid_r_max},
                   {"grid_feature_dim", c.geometry.grid_feature_dim},
                   {"z_dim", c.geometry.z_dim},
                   {"hidden", c.geometry.hidden},
                   {"hidden_layers", c.geometry.hidden_layers}};
  auto head = [](const HeadConfig& h) {
    return json{{"freq_bands", h.freq_bands}, {"hidden", h.hidden}, {"hidden_layers", h.hidden_layers}};
  };
  j["diffuse"] = head(c.diffuse);
  j["specular"] = head(c.specular);
  j["material"] = head(c.material);
  j["ide_degree"] = c.ide_degree;
  j["background_freq_bands"] = c.background_freq_bands;
  j["background_hidden"] = c.background_hidden;
  j["background_layers"] = c.background_layers;
  j["beta_init"] = c.beta_init;
  j["env_lobes"] = c.env_lobes;
  j["visibility"] = {{"resolution", c.visibility.resolution},
                     {"num_lobes", c.visibility.num_lobes},
                     {"bbox_min", c.visibility.bbox_min},
                     {"bbox_max", c.visibility.bbox_max}};
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  const auto& g = j.at("geometry");
  c.geometry.freq_bands = g.at("freq_bands");
  c.geometry.grid_levels = g.at("grid_levels");
  c.geometry.grid_r_min = g.at("grid_r_min");
  c.geometry.grid_r_max = g.at("grid_r_max");
  c.geometry.grid_feature_dim = g.at("grid_feature_dim");
  c.geometry.z_dim = g.at("z_dim");
  c.geometry.hidden = g.at("hidden");
  c.geometry.hidden_layers = g.at("hidden_layers");
  auto head = [](const json& h) {
    HeadConfig out;
    out.freq_bands = h.at("freq_bands");
    out.hidden = h.at("hidden");
    out.hidden_layers = h.at("hidden_layers");
    return out;
  };
  c.diffuse = head(j.at("diffuse"));
  c.specular = head(j.at("specular"));
  c.material = head(j.at("material"));
  c.ide_degree = j.at("ide_degree");
  c.background_freq_bands = j.at("background_freq_bands");
  c.background_hidden = j.at("background_hidden");
  c.background_layers = j.at("background_layers");
  c.beta_init = j.at("beta_init");
  c.env_lobes = j.at("env_lobes");
  c.visibility.resolution = j.at("visibility").at("resolution");
  c.visibility.num_lobes = j.at("visibility").at("num_lobes");
  c.visibility.bbox_min = j.at("visibility").at("bbox_min");
  c.visibility.bbox_max = j.at("visibility").at("bbox_max");
  return c;
}

struct TensorRef {
  const char* name;
  VecX* vec;
};

std::vector<TensorRef> scene_tensors(NeuralScene& s) {
  return {{"geometry.net", &s.geometry.net().theta()},
          {"geometry.grid", &s.geometry.grid().features()},
          {"diffuse", &s.diffuse.net().theta()},
          {"specular", &s.specular.net().theta()},
          {"material", &s.material.net().theta()},
          {"background", &s.background.net().theta()},
          {"beta", &s.beta_raw},
          {"env", &s.env.theta()},
          {"visibility", &s.visibility.theta()}};
}

void write_model(std::ostream& out, const NeuralScene& scene) {
  out.write(kMagic, sizeof(kMagic) - 1);
  write_string(out, config_to_json(scene.config).dump());
  auto tensors = scene_tensors(const_cast<NeuralScene&>(scene));
  const std::uint64_t count = tensors.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& t : tensors) {
    write_string(out, t.name);
    write_vec(out, *t.vec);
  }
}

NeuralScene read_model(std::istream& in) {
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (std::string(magic, sizeof(magic)) != std::string(kMagic, sizeof(magic)))
    throw DomainError("load_checkpoint: bad magic");
  const ModelConfig cfg = config_from_json(json::parse(read_string(in)));
  Rng rng(0);  // weights are overwritten below
  NeuralScene scene(cfg, rng);
  auto tensors = scene_tensors(scene);
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    VecX v = read_vec(in);
    bool found = false;
    for (auto& t : tensors)
      if (name == t.name) {
        if (t.vec->size() != v.size())
          throw DomainError("load_checkpoint: size mismatch for tensor " + name);
        *t.vec = std::move(v);
        found = true;
        break;
      }
    if (!found) throw DomainError("load_checkpoint: unknown tensor " + name);
  }
  if (!in) throw DomainError("load_checkpoint: truncated stream");
  return scene;
}

}  // namespace

void save_checkpoint(const std::string& path, const NeuralScene& scene) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("save_checkpoint: cannot open " + path);
  write_model(out, scene);
  const char has_train = 0;
  out.write(&has_train, 1);
}

NeuralScene load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("load_checkpoint: cannot open " + path);
  return read_model(in);
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(NeuralScene& scene, const SceneDataset& dataset, std::uint64_t seed)
    : scene_(scene), dataset_(dataset), rng_(seed) {
  for (const auto& t : scene_tensors(scene_)) groups_.emplace_back(t.name, t.vec);
}

void Trainer::zero_grads() {
  for (auto& g : groups_) g.zero_grad();
}

namespace {

ParamGroup* find_group(std::vector<ParamGroup>& groups, const std::string& name) {
  for (auto& g : groups)
    if (g.name == name) return &g;
  throw DomainError("trainer: missing parameter group " + name);
}

}  // namespace

void Trainer::begin_stage1(const Stage1Config& cfg) {
  cfg1_ = cfg;
  stage_ = 1;
  step_ = 0;
  adam_ = std::make_unique<Adam>(cfg.adam);
  for (auto& g : groups_) {
    g.m.setZero();
    g.v.setZero();
  }
  scene_.beta_raw[0] = cfg.beta_start;
}

Ray Trainer::sample_train_ray(Vec3* ref_color, int* view_id, int* px, int* py) {
  const auto& ids = dataset_.train_ids.empty() ? dataset_.eval_ids : dataset_.train_ids;
  const int vi = ids[static_cast<std::size_t>(
      std::uniform_int_distribution<int>(0, static_cast<int>(ids.size()) - 1)(rng_))];
  const auto& view = dataset_.view(vi);
  const int x = std::uniform_int_distribution<int>(0, view.camera.width - 1)(rng_);
  const int y = std::uniform_int_distribution<int>(0, view.camera.height - 1)(rng_);
  if (ref_color) *ref_color = view.image.at(x, y);
  if (view_id) *view_id = vi;
  if (px) *px = x;
  if (py) *py = y;
  return view.camera.generate_ray(x + 0.5, y + 0.5);
}

LossBreakdown Trainer::color_pass_stage1(LossBreakdown rec) {
  const int batch = cfg1_.rays_per_batch;
  const real beta = scene_.beta();
  const real inv_batch = 1.0 / static_cast<real>(batch);

  VecX& g_geo = find_group(groups_, "geometry.net")->grad;
  VecX& g_grid = find_group(groups_, "geometry.grid")->grad;
  VecX& g_dif = find_group(groups_, "diffuse")->grad;
  VecX& g_spec = find_group(groups_, "specular")->grad;
  VecX& g_bg = find_group(groups_, "background")->grad;

  struct FgSample {
    GeometryField::Cache geo;
    DiffuseField::Cache dif;
    SpecularField::Cache spec;
    GeometryOutput g;
    bool has_spec = false;
    Vec3 cs = Vec3::Zero();
  };

  for (int b = 0; b < batch; ++b) {
    Vec3 ref;
    int vi = 0, px = 0, py = 0;
    const Ray ray = sample_train_ray(&ref, &vi, &px, &py);

    // Foreground forward with caches.
    std::vector<FgSample> samples;
    std::vector<real> sigma, delta;
    std::vector<Vec3> rgb;
    CompositeResult fg;
    real bg_start = 0.0;
    const auto hit = ray_sphere_intersect(ray.origin, ray.dir, 1.0);
    if (hit) {
      const auto [t0, t1] = *hit;
      bg_start = t1;
      const auto ts = sample_points(t0, t1, cfg1_.fg_samples, true, &rng_);
      const int n = cfg1_.fg_samples;
      samples.resize(static_cast<std::size_t>(n));
      sigma.resize(static_cast<std::size_t>(n));
      rgb.resize(static_cast<std::size_t>(n));
      delta.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) delta[static_cast<std::size_t>(i)] = (i + 1 < n ? ts[static_cast<std::size_t>(i + 1)] : t1) - ts[static_cast<std::size_t>(i)];
      for (int i = 0; i < n; ++i) {
        auto& s = samples[static_cast<std::size_t>(i)];
        const Vec3 x = ray.origin + ts[static_cast<std::size_t>(i)] * ray.dir;
        s.g = scene_.geometry.eval(x, &s.geo);
        sigma[static_cast<std::size_t>(i)] = sdf_to_density(s.g.s, beta);
        Vec3 c = scene_.diffuse.eval(x, s.g.z, &s.dif);
        if (cfg1_.use_specular) {
          Vec3 grad = Vec3::Zero();
          scene_.geometry.backward(s.geo, 1.0, VecX(), 0.0, Vec3::Zero(), &grad, nullptr, nullptr);
          const real gn = grad.norm();
          if (gn > 1e-8) {
            const Vec3 normal = grad / gn;
            s.cs = scene_.specular.eval(x, s.g.z, s.g.rho, ray.dir, normal, s.g.q, &s.spec);
            c = compose_color(c, s.cs, s.g.q);
            s.has_spec = true;
          }
        }
        rgb[static_cast<std::size_t>(i)] = c;
      }
      fg = composite(sigma, rgb, delta);
    }

    // Background forward with caches.
    const int nb = cfg1_.bg_samples;
    std::vector<BackgroundField::Cache> bg_caches(static_cast<std::size_t>(nb));
    std::vector<real> bg_sigma(static_cast<std::size_t>(nb)), bg_delta(static_cast<std::size_t>(nb)),
        bg_ts(static_cast<std::size_t>(nb));
    std::vector<Vec3> bg_rgb(static_cast<std::size_t>(nb));
    CompositeResult bg;
    const bool do_bg = nb > 0 && fg.transmittance > 1e-5;
    if (do_bg) {
      const real bq = ray.origin.dot(ray.dir);
      for (int i = 0; i < nb; ++i) {
        const real inv_r = 1.0 - (i + 0.5) * (1.0 - 1e-3) / nb;
        const real r = 1.0 / inv_r;
        const real disc = bq * bq - (ray.origin.squaredNorm() - r * r);
        bg_ts[static_cast<std::size_t>(i)] = std::max(-bq + std::sqrt(std::max(disc, 0.0)), bg_start);
        const Vec3 p = ray.origin + bg_ts[static_cast<std::size_t>(i)] * ray.dir;
        const real pr = std::max(p.norm(), 1.0 + 1e-9);
        const Vec4 ip(p.x() / pr, p.y() / pr, p.z() / pr, 1.0 / pr);
        real sg;
        Vec3 cg;
        scene_.background.eval(ip, &sg, &cg, &bg_caches[static_cast<std::size_t>(i)]);
        bg_sigma[static_cast<std::size_t>(i)] = sg;
        bg_rgb[static_cast<std::size_t>(i)] = cg;
      }
      for (int i = 0; i + 1 < nb; ++i)
        bg_delta[static_cast<std::size_t>(i)] =
            std::max(bg_ts[static_cast<std::size_t>(i + 1)] - bg_ts[static_cast<std::size_t>(i)], 1e-6);
      bg_delta[static_cast<std::size_t>(nb - 1)] = bg_delta[static_cast<std::size_t>(std::max(nb - 2, 0))];
      bg = composite(bg_sigma, bg_rgb, bg_delta);
    }

    const Vec3 color = fg.color + fg.transmittance * bg.color;
    const Vec3 err = color - ref;
    rec.color += err.cwiseAbs().sum() * inv_batch;
    Vec3 dC;
    for (int j = 0; j < 3; ++j) dC[j] = (err[j] > 0.0 ? 1.0 : (err[j] < 0.0 ? -1.0 : 0.0)) * inv_batch;

    // Silhouette supervision on the foreground opacity 1 - T_fg. Pixels
    // inside the mask additionally freeze the background so it cannot
    // absorb the object.
    real dT_mask = 0.0;
    bool freeze_bg = false;
    if (cfg1_.lambda_mask > 0.0 && dataset_.view(vi).mask) {
      const real m = dataset_.view(vi).mask->at(px, py) >= 0 ? 1.0 : 0.0;
      freeze_bg = m > 0.5;
      const real opacity = hit ? 1.0 - fg.transmittance : 0.0;
      const real diff = opacity - m;
      rec.mask += cfg1_.lambda_mask * std::abs(diff) * inv_batch;
      const real sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      dT_mask = -cfg1_.lambda_mask * sgn * inv_batch;  // d opacity/dT = -1
    }

    // Backward: C = C_fg + T_fg * C_bg.
    if (hit) {
      const real dT = (do_bg ? dC.dot(bg.color) : 0.0) + dT_mask;
      std::vector<real> dsig;
      std::vector<Vec3> dcol;
      if (step_ < cfg1_.mask_warmup) {
        // Warmup: density follows the silhouette only; colors still learn.
        std::vector<Vec3> dcol_unused;
        composite_backward(sigma, rgb, delta, fg, Vec3::Zero(), dT_mask, &dsig, &dcol_unused);
        std::vector<real> dsig_unused;
        composite_backward(sigma, rgb, delta, fg, dC, 0.0, &dsig_unused, &dcol);
      } else {
        composite_backward(sigma, rgb, delta, fg, dC, dT, &dsig, &dcol);
      }
      for (std::size_t i = 0; i < samples.size(); ++i) {
        auto& s = samples[i];
        real ds_dsigma, db_unused;
        sdf_to_density_grad(s.g.s, beta, &ds_dsigma, &db_unused);
        real ds = dsig[i] * ds_dsigma;
        VecX dz = VecX::Zero(s.g.z.size());
        Vec3 dq = Vec3::Zero();
        real drho = 0.0;
        scene_.diffuse.backward(s.dif, dcol[i], &dz, &g_dif);
        if (s.has_spec) {
          const Vec3 dcs = s.g.q.cwiseProduct(dcol[i]);
          dq += s.cs.cwiseProduct(dcol[i]);
          scene_.specular.backward(s.spec, dcs, &dz, &drho, &dq, &g_spec);
        }
        if (step_ < cfg1_.mask_warmup) {
          // Keep the shared trunk untouched by appearance gradients too.
          dz.setZero();
          dq.setZero();
          drho = 0.0;
        }
        scene_.geometry.backward(s.geo, ds, dz, drho, dq, nullptr, &g_geo, &g_grid);
      }
    }
    if (do_bg && !freeze_bg) {
      std::vector<real> dsig;
      std::vector<Vec3> dcol;
      composite_backward(bg_sigma, bg_rgb, bg_delta, bg, fg.transmittance * dC, 0.0, &dsig, &dcol);
      for (int i = 0; i < nb; ++i)
        scene_.background.backward(bg_caches[static_cast<std::size_t>(i)], dsig[static_cast<std::size_t>(i)],
                                   dcol[static_cast<std::size_t>(i)], &g_bg);
    }
  }
  return rec;
}

void Trainer::point_anchor_pass(LossBreakdown& rec) {
  if (cfg1_.lambda_points <= 0.0 || dataset_.points.empty()) return;
  const int n = std::min<int>(cfg1_.point_batch, static_cast<int>(dataset_.points.size()));
  if (n <= 0) return;
  VecX& g_geo = find_group(groups_, "geometry.net")->grad;
  VecX& g_grid = find_group(groups_, "geometry.grid")->grad;
  const real scale = cfg1_.lambda_points / static_cast<real>(n);
  for (int i = 0; i < n; ++i) {
    const std::size_t idx =
        static_cast<std::size_t>(uniform(rng_) * dataset_.points.size()) % dataset_.points.size();
    const Vec3& p = dataset_.points[idx];
    GeometryField::Cache cache;
    const GeometryOutput g = scene_.geometry.eval(p, &cache);
    rec.points += scale * std::abs(g.s);
    const real sgn = g.s > 0.0 ? 1.0 : (g.s < 0.0 ? -1.0 : 0.0);
    scene_.geometry.backward(cache, scale * sgn, VecX(), 0.0, Vec3::Zero(), nullptr, &g_geo,
                             &g_grid);
  }
}

void Trainer::regularizer_pass(LossBreakdown& rec) {
  const int n = cfg1_.reg_points;
  if (n <= 0) return;
  VecX& g_geo = find_group(groups_, "geometry.net")->grad;
  VecX& g_grid = find_group(groups_, "geometry.grid")->grad;

  auto seed_into_geometry = [&](real scale) {
    return [this, &g_geo, &g_grid, scale](const Vec3& p, real dLds) {
      GeometryField::Cache cache;
      scene_.geometry.eval(p, &cache);
      scene_.geometry.backward(cache, scale * dLds, VecX(), 0.0, Vec3::Zero(), nullptr, &g_geo,
                               &g_grid);
    };
  };

  std::vector<Vec3> points;
  std::vector<real> kappas;
  points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Vec3 dir = uniform_sphere(rng_);
    const real r = std::cbrt(uniform(rng_));
    const Vec3 p = 0.95 * r * dir;
    points.push_back(p);
    const GeometryOutput g = scene_.geometry.eval(p);
    kappas.push_back(1.0 / std::max(g.rho, 1e-6));
  }

  if (cfg1_.lambda_eik > 0.0) {
    const real scale = cfg1_.lambda_eik / static_cast<real>(n);
    const real loss = eikonal_loss(points, scene_.geometry, seed_into_geometry(scale));
    rec.eikonal = scale * loss;
  }

  rec.lambda1 = cfg1_.lambda_curv_init * lambda_schedule(step_, cfg1_.steps, true);
  const real lam_low =
      cfg1_.lambda_curv_init * lambda_schedule(step_, cfg1_.steps, false, cfg1_.low_kappa_fraction);
  if (rec.lambda1 > 0.0 || lam_low > 0.0) {
    std::vector<Vec3> high_pts, low_pts;
    std::vector<real> high_k, low_k;
    for (int i = 0; i < n; ++i) {
      if (kappas[static_cast<std::size_t>(i)] >= cfg1_.kappa_split) {
        high_pts.push_back(points[static_cast<std::size_t>(i)]);
        high_k.push_back(kappas[static_cast<std::size_t>(i)]);
      } else {
        low_pts.push_back(points[static_cast<std::size_t>(i)]);
        low_k.push_back(kappas[static_cast<std::size_t>(i)]);
      }
    }
    std::vector<CurvatureProbe> probes;
    auto add_region = [&](const std::vector<Vec3>& pts, const std::vector<real>& ks, real lam) {
      if (pts.empty() || lam <= 0.0) return;
      auto region = make_curvature_probes(pts, ks, cfg1_.curvature_eps, rng_, scene_.geometry,
                                          cfg1_.laplace);
      const real scale = lam / static_cast<real>(n);
      for (auto& pr : region) pr.weight *= scale;
      probes.insert(probes.end(), region.begin(), region.end());
    };
    add_region(high_pts, high_k, rec.lambda1);
    add_region(low_pts, low_k, lam_low);
    if (!probes.empty())
      rec.curvature = curvature_loss_eval(probes, scene_.geometry, seed_into_geometry(1.0));
  }
}

bool Trainer::apply_step(LossBreakdown& rec) {
  bool finite = std::isfinite(rec.total);
  for (const auto& g : groups_) finite = finite && g.grad.allFinite();
  if (!finite) {
    rec.skipped = true;
    zero_grads();
    return false;
  }
  adam_->step(groups_);
  return true;
}

LossBreakdown Trainer::stage1_step() {
  if (stage_ != 1) throw DomainError("stage1_step: call begin_stage1 first");
  zero_grads();
  LossBreakdown rec;
  rec.step = step_;

  const real frac = cfg1_.steps > 1 ? static_cast<real>(step_) / (cfg1_.steps - 1) : 1.0;
  scene_.beta_raw[0] = cfg1_.beta_start * std::pow(cfg1_.beta_end / cfg1_.beta_start, frac);

  rec = color_pass_stage1(rec);
  point_anchor_pass(rec);
  regularizer_pass(rec);
  rec.total = rec.color + rec.mask + rec.points + rec.curvature + rec.eikonal;
  apply_step(rec);
  history_.push_back(rec);
  ++step_;
  return rec;
}

// ---------------------------------------------------------------------------
// Stage 2
// ---------------------------------------------------------------------------

void Trainer::begin_stage2(const Stage2Config& cfg) {
  cfg2_ = cfg;
  stage_ = 2;
  step_ = 0;
  adam_ = std::make_unique<Adam>(cfg.adam);
  for (auto& g : groups_) {
    g.m.setZero();
    g.v.setZero();
  }
  albedo_k_ = cfg.albedo_k;
  roughness_k_ = cfg.roughness_k;
  metallic_k_ = cfg.metallic_k;
  if (cfg.fit_visibility) fit_visibility_grid(scene_.geometry, scene_.visibility, cfg.vis_fit);
  if (cfg.sam_enabled) refresh_clusters();
}

namespace {

// Mean of samples grouped by label, as clustering inputs.
std::vector<VecX> instance_means(const std::vector<int>& labels, const std::vector<VecX>& values) {
  std::map<int, std::pair<VecX, int>> acc;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto it = acc.find(labels[i]);
    if (it == acc.end())
      acc.emplace(labels[i], std::make_pair(values[i], 1));
    else {
      it->second.first += values[i];
      ++it->second.second;
    }
  }
  std::vector<VecX> means;
  for (auto& [label, pair] : acc) means.push_back(pair.first / static_cast<real>(pair.second));
  return means;
}

}  // namespace

void Trainer::refresh_clusters() {
  std::vector<VecX> albedo_vals, rough_vals, metal_vals;
  std::vector<int> labels;
  int attempts = 0;
  while (static_cast<int>(labels.size()) < cfg2_.cluster_samples &&
         attempts++ < 40 * cfg2_.cluster_samples) {
    Vec3 ref;
    int vi, px, py;
    const Ray ray = sample_train_ray(&ref, &vi, &px, &py);
    const auto& view = dataset_.view(vi);
    int label = 0;
    if (view.mask) {
      label = view.mask->at(px, py);
      if (label < 0) continue;
    }
    const auto t = sphere_trace(scene_.geometry, ray.origin, ray.dir, cfg2_.trace_t_max, 1e-4);
    if (!t) continue;
    const Vec3 x = ray.origin + *t * ray.dir;
    const GeometryOutput g = scene_.geometry.eval(x);
    const MaterialOutput m = scene_.material.eval(x, g.z);
    albedo_vals.push_back(VecX(m.albedo));
    rough_vals.push_back(VecX::Constant(1, m.roughness));
    metal_vals.push_back(VecX::Constant(1, m.metallic));
    labels.push_back(label);
  }
  if (labels.size() < 2) return;  // keep previous centers

  auto cluster = [&](const std::vector<VecX>& vals, int& k, std::vector<VecX>& centers) {
    const auto means = instance_means(labels, vals);
    if (means.size() < 2) {
      centers = means;
      k = 1;
      return;
    }
    k = std::min(k, static_cast<int>(means.size()));
    k = update_cluster_count(means, k, rng_, cfg2_.silhouette);
    centers = kmeans_cluster(means, k, rng_).centers;
  };
  cluster(albedo_vals, albedo_k_, albedo_centers_);
  cluster(rough_vals, roughness_k_, roughness_centers_);
  cluster(metal_vals, metallic_k_, metallic_centers_);
}

LossBreakdown Trainer::stage2_step() {
  if (stage_ != 2) throw DomainError("stage2_step: call begin_stage2 first");
  if (cfg2_.sam_enabled && step_ > 0 && step_ % cfg2_.cluster_period == 0) refresh_clusters();
  zero_grads();
  LossBreakdown rec;
  rec.step = step_;

  VecX& g_mat = find_group(groups_, "material")->grad;
  VecX& g_env = find_group(groups_, "env")->grad;
  VecX& g_vis = find_group(groups_, "visibility")->grad;

  struct Shot {
    ShadingPoint sp;
    MaterialField::Cache cache;
    ShadeResult shade;
    Vec3 ref;
  };
  std::vector<Shot> shots;
  int attempts = 0;
  while (static_cast<int>(shots.size()) < cfg2_.rays_per_batch &&
         attempts++ < 20 * cfg2_.rays_per_batch) {
    Vec3 ref;
    int vi, px, py;
    const Ray ray = sample_train_ray(&ref, &vi, &px, &py);
    const auto& view = dataset_.view(vi);
    if (view.mask && view.mask->at(px, py) < 0) continue;
    const auto t = sphere_trace(scene_.geometry, ray.origin, ray.dir, cfg2_.trace_t_max, 1e-4);
    if (!t) continue;
    Shot shot;
    const Vec3 x = ray.origin + *t * ray.dir;
    const GeometryOutput g = scene_.geometry.eval(x);
    Vec3 n = scene_.geometry.sdf_grad(x);
    const real nn = n.norm();
    if (nn < 1e-8) continue;
    n /= nn;
    if (n.dot(ray.dir) > 0.0) n = -n;
    const MaterialOutput m = scene_.material.eval(x, g.z, &shot.cache);
    shot.sp.position = x;
    shot.sp.normal = n;
    shot.sp.omega_o = -ray.dir;
    shot.sp.albedo = m.albedo;
    shot.sp.roughness = m.roughness;
    shot.sp.metallic = m.metallic;
    shot.shade = shade(shot.sp, scene_.env, &scene_.visibility, cfg2_.spp, rng_);
    shot.ref = ref;
    shots.push_back(std::move(shot));
  }
  if (shots.empty()) {
    rec.skipped = true;
    history_.push_back(rec);
    ++step_;
    return rec;
  }
  const real inv_n = 1.0 / static_cast<real>(shots.size());

  // SAM pulls on the raw batch values (centers frozen between refreshes).
  std::vector<VecX> d_albedo_sam, d_rough_sam, d_metal_sam;
  if (cfg2_.sam_enabled && !albedo_centers_.empty()) {
    std::vector<VecX> av, rv, mv;
    for (const auto& s : shots) {
      av.push_back(VecX(s.sp.albedo));
      rv.push_back(VecX::Constant(1, s.sp.roughness));
      mv.push_back(VecX::Constant(1, s.sp.metallic));
    }
    rec.sam_albedo = cfg2_.sam_weight * inv_n * sam_loss(av, albedo_centers_, &d_albedo_sam);
    rec.sam_roughness = cfg2_.sam_weight * inv_n * sam_loss(rv, roughness_centers_, &d_rough_sam);
    rec.sam_metallic = cfg2_.sam_weight * inv_n * sam_loss(mv, metallic_centers_, &d_metal_sam);
  }

  for (std::size_t i = 0; i < shots.size(); ++i) {
    auto& s = shots[i];
    const Vec3 err = s.shade.color - s.ref;
    rec.color += err.cwiseAbs().sum() * inv_n;
    Vec3 dC;
    for (int j = 0; j < 3; ++j) dC[j] = (err[j] > 0.0 ? 1.0 : (err[j] < 0.0 ? -1.0 : 0.0)) * inv_n;
    Vec3 dA = Vec3::Zero();
    real dR = 0.0, dM = 0.0;
    shade_backward(s.sp, scene_.env, &scene_.visibility, s.shade.samples, dC, &dA, &dR, &dM,
                   &g_env, &g_vis);
    if (!d_albedo_sam.empty()) {
      const real w = cfg2_.sam_weight * inv_n;
      dA += w * Vec3(d_albedo_sam[i]);
      dR += w * d_rough_sam[i][0];
      dM += w * d_metal_sam[i][0];
    }
    scene_.material.backward(s.cache, dA, dR, dM, nullptr, &g_mat);
  }

  rec.total = rec.color + rec.sam_albedo + rec.sam_roughness + rec.sam_metallic;
  apply_step(rec);
  history_.push_back(rec);
  ++step_;
  return rec;
}

// ---------------------------------------------------------------------------
// Trainer state io
// ---------------------------------------------------------------------------

void Trainer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("Trainer::save: cannot open " + path);
  write_model(out, scene_);
  const char has_train = 1;
  out.write(&has_train, 1);
  const std::int64_t stage = stage_, step = step_, adam_t = adam_ ? adam_->steps() : 0;
  out.write(reinterpret_cast<const char*>(&stage), sizeof(stage));
  out.write(reinterpret_cast<const char*>(&step), sizeof(step));
  out.write(reinterpret_cast<const char*>(&adam_t), sizeof(adam_t));
  const real lr = adam_ ? adam_->lr() : 0.0;
  out.write(reinterpret_cast<const char*>(&lr), sizeof(lr));
  const std::uint64_t ng = groups_.size();
  out.write(reinterpret_cast<const char*>(&ng), sizeof(ng));
  for (const auto& g : groups_) {
    write_string(out, g.name);
    write_vec(out, g.m);
    write_vec(out, g.v);
  }
  std::ostringstream rng_state;
  rng_state << rng_;
  write_string(out, rng_state.str());
  const std::uint64_t nc = albedo_centers_.size();
  out.write(reinterpret_cast<const char*>(&nc), sizeof(nc));
  for (const auto& c : albedo_centers_) write_vec(out, c);
  const std::uint64_t nr = roughness_centers_.size();
  out.write(reinterpret_cast<const char*>(&nr), sizeof(nr));
  for (const auto& c : roughness_centers_) write_vec(out, c);
  const std::uint64_t nm = metallic_centers_.size();
  out.write(reinterpret_cast<const char*>(&nm), sizeof(nm));
  for (const auto& c : metallic_centers_) write_vec(out, c);
}

void Trainer::restore(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("Trainer::restore: cannot open " + path);
  NeuralScene loaded = read_model(in);
  auto src = scene_tensors(loaded);
  auto dst = scene_tensors(scene_);
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].vec = *src[i].vec;
  char has_train = 0;
  in.read(&has_train, 1);
  if (!has_train) throw DomainError("Trainer::restore: checkpoint has no training state");
  std::int64_t stage, step, adam_t;
  in.read(reinterpret_cast<char*>(&stage), sizeof(stage));
  in.read(reinterpret_cast<char*>(&step), sizeof(step));
  in.read(reinterpret_cast<char*>(&adam_t), sizeof(adam_t));
  real lr;
  in.read(reinterpret_cast<char*>(&lr), sizeof(lr));
  if (stage != stage_)
    throw DomainError("Trainer::restore: checkpoint is for a different stage");
  step_ = static_cast<int>(step);
  if (adam_) {
    adam_->set_steps(adam_t);
    adam_->set_lr(lr);
  }
  std::uint64_t ng = 0;
  in.read(reinterpret_cast<char*>(&ng), sizeof(ng));
  for (std::uint64_t i = 0; i < ng; ++i) {
    const std::string name = read_string(in);
    ParamGroup* g = find_group(groups_, name);
    g->m = read_vec(in);
    g->v = read_vec(in);
  }
  std::istringstream rng_state(read_string(in));
  rng_state >> rng_;
  auto read_centers = [&](std::vector<VecX>& centers) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    centers.clear();
    for (std::uint64_t i = 0; i < n; ++i) centers.push_back(read_vec(in));
  };
  read_centers(albedo_centers_);
  read_centers(roughness_centers_);
  read_centers(metallic_centers_);
  if (!in) throw DomainError("Trainer::restore: truncated checkpoint");
}

void Trainer::write_loss_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DomainError("write_loss_csv: cannot open " + path);
  out << "step,total,color,mask,points,curvature,eikonal,sam_albedo,sam_roughness,sam_metallic,lambda1,skipped\n";
  out.precision(17);
  for (const auto& r : history_)
    out << r.step << "," << r.total << "," << r.color << "," << r.mask << "," << r.points << "," << r.curvature << "," << r.eikonal
        << "," << r.sam_albedo << "," << r.sam_roughness << "," << r.sam_metallic << ","
        << r.lambda1 << "," << (r.skipped ? 1 : 0) << "\n";
}

}  // namespace facade
