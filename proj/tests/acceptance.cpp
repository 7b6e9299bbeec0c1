// Acceptance harness. `acceptance fast` runs the self-contained numeric
// criteria (1-9); `acceptance e2e` drives the CLI binary through the full
// benchmark (10-12). One PASS/FAIL line per criterion; exit 0 iff all pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facade/brdf.hpp"
#include "facade/dataset.hpp"
#include "facade/fields.hpp"
#include "facade/regularizers.hpp"
#include "facade/renderer.hpp"
#include "facade/semantic.hpp"
#include "facade/sg.hpp"
#include "facade/synth.hpp"
#include "facade/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace facade;

namespace {

int failures = 0;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double sec() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void report(int id, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// fast mode
// ---------------------------------------------------------------------------

void criterion1() {
  Timer t;
  bool ok = true;
  for (real beta : {0.1, 0.02, 0.005}) {
    ok &= sdf_to_density(0.0, beta) == 0.5 / beta;
    ok &= std::abs(sdf_to_density(1e-18, beta) - sdf_to_density(-1e-18, beta)) < 1e-12;
  }
  int violations = 0;
  real prev = std::numeric_limits<real>::infinity();
  for (int i = 0; i < 10000; ++i) {
    const real s = -3.0 + 6.0 * i / 9999.0;
    const real v = sdf_to_density(s, 0.05);
    if (v > prev) ++violations;
    prev = v;
  }
  ok &= violations == 0;
  const double el = t.sec();
  ok &= el < 1.0;
  report(1, ok, fmt("density transform: value at zero exact, jump < 1e-12, %d monotonicity "
                    "violations over 10^4 points, %.2fs",
                    violations, el));
}

void criterion2() {
  Timer t;
  Rng rng(21);
  real worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 32;
    std::vector<real> sigma(n), delta(n);
    std::vector<Vec3> color(n);
    for (int i = 0; i < n; ++i) {
      sigma[i] = uniform(rng, 0.0, 50.0);
      delta[i] = uniform(rng, 1e-4, 0.1);
      color[i] = Vec3(uniform(rng), uniform(rng), uniform(rng));
    }
    const CompositeResult res = composite(sigma, color, delta);
    const real wsum = std::accumulate(res.weight.begin(), res.weight.end(), 0.0);
    worst = std::max(worst, std::abs(wsum + res.transmittance - 1.0));
  }

  const int n = 512;
  const real sigma_h = 2.0, t_total = 1.5;
  std::vector<real> sigma(n, sigma_h), delta(n, t_total / n);
  std::vector<Vec3> color(n, Vec3::Zero());
  const CompositeResult res = composite(sigma, color, delta);
  const real expected = std::exp(-sigma_h * t_total);
  const real rel = std::abs(res.transmittance - expected) / expected;

  const double el = t.sec();
  const bool ok = worst < 1e-12 && rel < 0.01 && el < 10.0;
  report(2, ok, fmt("compositing: telescoping residual %.2e, homogeneous transmittance off by "
                    "%.3f%% at N=512, %.2fs",
                    worst, 100.0 * rel, el));
}

void criterion3() {
  SphereSdf sphere(Vec3(0.1, -0.2, 0.05), 0.55);
  Rng rng(31);
  std::vector<Vec3> pts;
  for (int i = 0; i < 200; ++i)
    pts.push_back(Vec3(uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8)));
  const real eik = eikonal_loss(pts, sphere);

  PlaneSdf plane(Vec3(0.2, 0.1, 1.0).normalized(), Vec3(0.0, 0.0, -0.1));
  std::vector<real> kappas(pts.size(), 1.0);
  const real curv = curvature_loss(pts, kappas, 0.02, rng, plane);

  const bool ok = eik < 1e-10 && curv < 1e-10;
  report(3, ok, fmt("regularizer zeros: eikonal %.2e on analytic sphere, curvature %.2e on "
                    "analytic plane",
                    eik, curv));
}

void criterion4() {
  Timer t;
  bool ok = true;
  std::ostringstream detail;
  detail << "projected GGX normalization:";
  for (real alpha : {0.1, 0.3, 0.5, 1.0}) {
    Rng rng(41);
    const int n = 1000000;
    real sum = 0.0;
    for (int i = 0; i < n; ++i) {
      Vec3 h = uniform_sphere(rng);
      h.z() = std::abs(h.z());
      sum += ggx_ndf(h.z(), alpha) * h.z();
    }
    const real integral = sum / n * (2.0 * kPi);
    ok &= std::abs(integral - 1.0) < 0.01;
    detail << fmt(" a=%.1f->%.4f", alpha, integral);
  }
  const double el = t.sec();
  ok &= el < 30.0;
  detail << fmt(", %.1fs", el);
  report(4, ok, detail.str());
}

void criterion5() {
  Timer t;
  // Diffuse furnace: Lambertian estimator under a (near-)constant unit light.
  ShadingPoint sp;
  sp.albedo = Vec3(0.5, 0.5, 0.5);
  sp.roughness = 1.0;
  sp.metallic = 0.0;
  sp.omega_o = Vec3(0.1, 0.0, 1.0).normalized();
  const SgMixture unit_env = constant_environment(Vec3::Ones());
  ShadeOptions lambertian;
  lambertian.sampling.diffuse_only = true;
  Rng rng(51);
  const ShadeResult furnace = shade(sp, unit_env, nullptr, 512, rng, lambertian);
  real furnace_err = 0.0;
  for (int c = 0; c < 3; ++c)
    furnace_err = std::max(furnace_err, std::abs(furnace.color[c] - sp.albedo[c]) / sp.albedo[c]);

  // Glossy estimate against a brute-force uniform-hemisphere reference.
  ShadingPoint glossy;
  glossy.albedo = Vec3(0.8, 0.6, 0.4);
  glossy.roughness = 0.25;
  glossy.metallic = 0.8;
  glossy.omega_o = Vec3(0.4, 0.0, 1.0).normalized();
  SgMixture lobe(1, 12.0, 0.0);
  lobe.theta()[0] = -0.4;
  lobe.theta()[1] = 0.0;
  lobe.theta()[2] = 1.0;
  lobe.theta()[4] = lobe.theta()[5] = lobe.theta()[6] = softplus_inverse(2.0);

  Rng ref_rng(52);
  const int n_ref = 10000000;
  Vec3 reference = Vec3::Zero();
  for (int i = 0; i < n_ref; ++i) {
    Vec3 wi = uniform_sphere(ref_rng);
    wi.z() = std::abs(wi.z());
    reference += lobe.eval(wi).cwiseProduct(brdf_eval(glossy, wi)) * wi.z();
  }
  reference *= 2.0 * kPi / n_ref;

  Rng est_rng(53);
  const ShadeResult est = shade(glossy, lobe, nullptr, 200000, est_rng);
  real glossy_err = 0.0;
  for (int c = 0; c < 3; ++c)
    glossy_err = std::max(glossy_err, std::abs(est.color[c] - reference[c]) / reference[c]);

  const double el = t.sec();
  const bool ok = furnace_err < 0.02 && glossy_err < 0.01 && el < 120.0;
  report(5, ok, fmt("shading estimator: diffuse furnace off by %.3f%% at m=512, glossy estimate "
                    "vs 10^7-sample uniform reference off by %.3f%%, %.1fs",
                    100.0 * furnace_err, 100.0 * glossy_err, el));
}

void criterion6() {
  Timer t;
  const auto reports = run_gradient_checks(3, 50);
  bool ok = !reports.empty();
  real worst = 0.0;
  std::string worst_name = "-";
  for (const auto& r : reports) {
    ok &= r.ok;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
  }
  const double el = t.sec();
  ok &= el < 300.0;
  report(6, ok, fmt("gradient suite: %zu ops at 50 probes, worst %.2e (%s), %.1fs",
                    reports.size(), worst, worst_name.c_str(), el));
}

real assignment_cost(const MatX& cost, const std::vector<int>& assign) {
  const int k = static_cast<int>(std::max(cost.rows(), cost.cols()));
  real total = 0.0;
  int assigned = 0;
  for (int r = 0; r < cost.rows(); ++r) {
    if (assign[static_cast<std::size_t>(r)] >= 0) {
      total += cost(r, assign[static_cast<std::size_t>(r)]);
      ++assigned;
    }
  }
  // Padded slots carry unit cost, mirroring the solver's rectangular contract.
  total += static_cast<real>(k - assigned);
  return total;
}

void criterion7() {
  Timer t;
  Rng rng(71);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(uniform(rng) * 7) % 7;
    const int m = 1 + static_cast<int>(uniform(rng) * 7) % 7;
    MatX cost(n, m);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < m; ++c) cost(r, c) = uniform(rng);

    const int k = std::max(n, m);
    MatX padded = MatX::Ones(k, k);
    padded.block(0, 0, n, m) = cost;
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    real best = std::numeric_limits<real>::infinity();
    do {
      real s = 0.0;
      for (int r = 0; r < k; ++r) s += padded(r, perm[static_cast<std::size_t>(r)]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));

    const real got = assignment_cost(cost, hungarian(cost));
    if (std::abs(got - best) > 1e-9) ++mismatches;
  }
  const double el = t.sec();
  const bool ok = mismatches == 0 && el < 30.0;
  report(7, ok, fmt("assignment solver vs brute force: %d mismatches over 1000 random matrices "
                    "up to 7x7, %.1fs",
                    mismatches, el));
}

void criterion8() {
  auto scalars = [](std::initializer_list<real> xs) {
    std::vector<VecX> out;
    for (real x : xs) out.push_back(VecX::Constant(1, x));
    return out;
  };
  const real hand = sam_loss(scalars({0.2, 0.8}), scalars({0.0, 1.0}));
  const bool hand_ok = hand == 0.4;

  // Every 4-point 1-D instance over a value grid, against exhaustive search.
  const std::vector<real> grid = {0.0, 0.2, 0.4, 0.55, 0.8, 1.0};
  int bad = 0, total = 0;
  for (std::size_t a = 0; a < grid.size(); ++a)
    for (std::size_t b = 0; b < grid.size(); ++b)
      for (std::size_t c = 0; c < grid.size(); ++c)
        for (std::size_t d = 0; d < grid.size(); ++d) {
          const auto values = scalars({grid[a], grid[b], grid[c], grid[d]});
          for (int k = 2; k <= 3; ++k) {
            real best = std::numeric_limits<real>::infinity();
            const int combos = static_cast<int>(std::pow(k, values.size()));
            for (int code = 0; code < combos; ++code) {
              int rem = code;
              std::vector<std::vector<real>> groups(static_cast<std::size_t>(k));
              for (std::size_t i = 0; i < values.size(); ++i) {
                groups[static_cast<std::size_t>(rem % k)].push_back(values[i][0]);
                rem /= k;
              }
              bool empty = false;
              real inertia = 0.0;
              for (const auto& g : groups) {
                if (g.empty()) {
                  empty = true;
                  break;
                }
                const real mean =
                    std::accumulate(g.begin(), g.end(), 0.0) / static_cast<real>(g.size());
                for (real v : g) inertia += (v - mean) * (v - mean);
              }
              if (!empty) best = std::min(best, inertia);
            }
            Rng rng(81);
            const KMeansResult res = kmeans_cluster(values, k, rng);
            ++total;
            if (std::abs(res.inertia - best) > 1e-12) ++bad;
          }
        }
  const bool ok = hand_ok && bad == 0;
  report(8, ok, fmt("material pull loss hand value %s (%.3f); clustering optimal on %d/%d "
                    "4-point instances",
                    hand_ok ? "exact" : "WRONG", hand, total - bad, total));
}

void criterion9() {
  Timer t;
  UnionSdf two;
  two.add(std::make_shared<SphereSdf>(Vec3(-0.35, 0.0, 0.0), 0.3));
  two.add(std::make_shared<SphereSdf>(Vec3(0.35, 0.0, 0.15), 0.25));

  VisibilityGridConfig cfg;
  cfg.resolution = 16;
  cfg.num_lobes = 12;
  VisibilityGrid grid(cfg);
  VisibilityFitConfig fit;
  fit.dirs_per_node = 96;
  fit.fit.refine_iters = 150;
  const VisibilityFitReport rep = fit_visibility_grid(two, grid, fit);

  Rng rng(91);
  real mae = 0.0;
  const int pairs = 10000;
  for (int i = 0; i < pairs; ++i) {
    const Vec3 x(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    const Vec3 d = uniform_sphere(rng);
    mae += std::abs(grid.query(x, d) - visibility_oracle(two, x, d));
  }
  mae /= pairs;
  const double el = t.sec();
  const bool ok = mae < 0.1 && el < 600.0;
  report(9, ok, fmt("visibility grid vs ray-marched oracle: MAE %.4f over 10^4 pairs "
                    "(node-fit error %.4f), %.1fs",
                    mae, rep.mean_abs_error, el));
}

// ---------------------------------------------------------------------------
// e2e mode
// ---------------------------------------------------------------------------

int run_cmd(const std::string& cmd) {
  std::printf("+ %s\n", cmd.c_str());
  std::fflush(stdout);
  return std::system(cmd.c_str());
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DomainError("cannot open " + p.string());
  json j;
  in >> j;
  return j;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  out << j.dump(2) << "\n";
}

struct MaterialStats {
  Vec3 albedo_mean = Vec3::Zero();
  Vec3 albedo_std = Vec3::Zero();
  real roughness_mean = 0.0;
  int count = 0;
};

// Evaluates the trained material field at ground-truth surface samples,
// bucketed per primitive. Sample points live in raw scene coordinates; the
// model lives in the dataset's normalized frame.
std::vector<MaterialStats> probe_material(const NeuralScene& model, const AnalyticScene& gt,
                                          const std::vector<Vec3>& points,
                                          const Vec3& norm_center, real norm_scale) {
  std::vector<MaterialStats> stats(gt.primitives.size());
  std::vector<std::vector<Vec3>> albedos(gt.primitives.size());
  for (const Vec3& p : points) {
    const int prim = gt.nearest(p);
    const Vec3 pn = (p - norm_center) * norm_scale;
    const GeometryOutput g = model.geometry.eval(pn);
    const MaterialOutput m = model.material.eval(pn, g.z);
    auto& s = stats[static_cast<std::size_t>(prim)];
    s.albedo_mean += m.albedo;
    s.roughness_mean += m.roughness;
    ++s.count;
    albedos[static_cast<std::size_t>(prim)].push_back(m.albedo);
  }
  for (std::size_t i = 0; i < stats.size(); ++i) {
    auto& s = stats[i];
    if (s.count == 0) continue;
    s.albedo_mean /= s.count;
    s.roughness_mean /= s.count;
    Vec3 var = Vec3::Zero();
    for (const Vec3& a : albedos[i]) var += (a - s.albedo_mean).cwiseAbs2();
    s.albedo_std = (var / std::max(1, s.count - 1)).cwiseSqrt();
  }
  return stats;
}

real mean_albedo_std(const std::vector<MaterialStats>& stats) {
  real sum = 0.0;
  int n = 0;
  for (const auto& s : stats) {
    if (s.count == 0) continue;
    sum += s.albedo_std.mean();
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

void e2e() {
  const std::string cli = FACADE_CLI_PATH;
  const fs::path base = fs::temp_directory_path() / "facade_acceptance_e2e";
  fs::remove_all(base);
  fs::create_directories(base);

  json cfg = read_json(fs::path(FACADE_CONFIG_DIR) / "benchmark.json");
  cfg["dataset"] = (base / "ds").string();
  const fs::path cfg_on = base / "bench.json";
  write_json(cfg_on, cfg);
  json cfg_nosam = cfg;
  cfg_nosam["stage2"]["sam_enabled"] = false;
  const fs::path cfg_off = base / "bench_nosam.json";
  write_json(cfg_off, cfg_nosam);

  if (run_cmd(cli + " synth --config " + cfg_on.string() + " --out " + (base / "ds").string() +
              " --seed 1") != 0) {
    report(10, false, "dataset synthesis failed");
    report(11, false, "skipped: no dataset");
    report(12, false, "skipped: no dataset");
    return;
  }
  const SceneDataset ds = load_dataset((base / "ds").string());

  Timer train_timer;
  const fs::path run = base / "run";
  bool trained =
      run_cmd(cli + " train-geometry --config " + cfg_on.string() + " --out " + run.string() +
              " --seed 5") == 0 &&
      run_cmd(cli + " train-material --config " + cfg_on.string() + " --checkpoint " +
              (run / "stage1.ckpt").string() + " --out " + run.string() + " --seed 5") == 0;
  const double t_train = train_timer.sec();
  if (!trained) {
    report(10, false, "training pipeline failed");
    report(11, false, "skipped: no trained model");
    report(12, false, "skipped: no trained model");
    return;
  }

  // --- criterion 10: held-out quality of both stages ---
  run_cmd(cli + " eval --config " + cfg_on.string() + " --checkpoint " +
          (run / "stage1.ckpt").string() + " --out " + run.string() + " --seed 5");
  const json metrics = read_json(run / "metrics.json");
  const real psnr_mean = metrics.value("psnr_mean", 0.0);
  const real chamfer = metrics.contains("chamfer") && !metrics["chamfer"].is_null()
                           ? metrics["chamfer"].get<real>()
                           : 1e9;
  Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
  for (const Vec3& p : ds.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const real diameter = (hi - lo).norm();

  const AnalyticScene gt = benchmark_scene();
  Rng probe_rng(17);
  const std::vector<Vec3> probes = sample_surface_points(gt, 4000, probe_rng);
  const NeuralScene model = load_checkpoint((run / "stage2.ckpt").string());
  const auto stats = probe_material(model, gt, probes, ds.norm_center, ds.norm_scale);

  real num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    num += stats[i].albedo_mean.dot(gt.primitives[i].albedo);
    den += stats[i].albedo_mean.squaredNorm();
  }
  const real scale = den > 0.0 ? num / den : 1.0;
  real albedo_err = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i)
    albedo_err = std::max(
        albedo_err, (scale * stats[i].albedo_mean - gt.primitives[i].albedo).cwiseAbs().mean());
  // Primitive 1 is the rough sphere, primitive 2 the glossy one.
  const bool rough_order = stats[1].roughness_mean > stats[2].roughness_mean;

  const bool ok10 = psnr_mean >= 28.0 && chamfer <= 0.02 * diameter && albedo_err <= 0.08 &&
                    rough_order && t_train <= 3600.0;
  report(10, ok10,
         fmt("benchmark: held-out PSNR %.2f dB (need >= 28), chamfer %.4f vs bound %.4f, "
             "per-primitive albedo error %.3f after scale %.3f (need <= 0.08), roughness "
             "ordering %s (%.2f vs %.2f), training %.0fs",
             psnr_mean, chamfer, 0.02 * diameter, albedo_err, scale,
             rough_order ? "correct" : "WRONG", stats[1].roughness_mean, stats[2].roughness_mean,
             t_train));

  // --- criterion 11: material-consistency ablation ---
  const fs::path run_off = base / "run_nosam";
  bool ab_ok = run_cmd(cli + " train-material --config " + cfg_off.string() + " --checkpoint " +
                       (run / "stage1.ckpt").string() + " --out " + run_off.string() +
                       " --seed 5") == 0;
  real std_on = 0.0, std_off = 0.0;
  if (ab_ok) {
    std_on = mean_albedo_std(stats);
    const NeuralScene off = load_checkpoint((run_off / "stage2.ckpt").string());
    std_off = mean_albedo_std(probe_material(off, gt, probes, ds.norm_center, ds.norm_scale));
    ab_ok = std_on < std_off;
  }
  report(11, ab_ok,
         fmt("ablation: per-primitive albedo std %.4f with consistency losses vs %.4f without "
             "(same seed and budget)",
             std_on, std_off));

  // --- criterion 12: relight and material edit round trip ---
  const int view = ds.eval_ids.at(0);
  const LabelImage& inst = *ds.view(view).mask;
  char stem[16];
  std::snprintf(stem, sizeof(stem), "%03d", view);

  // Roughness override confined to a ball inside the glossy sphere.
  const auto* glossy = dynamic_cast<const SphereSdf*>(gt.primitives[2].sdf.get());
  const Vec3 c_n = (glossy->center() - ds.norm_center) * ds.norm_scale;
  const real r_n = 0.9 * glossy->radius() * ds.norm_scale;
  json overrides;
  overrides["overrides"] = json::array({{{"center", {c_n.x(), c_n.y(), c_n.z()}},
                                         {"radius", r_n},
                                         {"property", "roughness"},
                                         {"value", 0.95}}});
  const fs::path ov_path = base / "overrides.json";
  write_json(ov_path, overrides);

  const fs::path edit_dir = base / "edit";
  bool ok12 = run_cmd(cli + " edit-material " + ov_path.string() + " --config " +
                      cfg_on.string() + " --checkpoint " + (run / "stage2.ckpt").string() +
                      " --out " + edit_dir.string() + " --seed 11 --views " +
                      std::to_string(view) + " --spp 32") == 0;

  int changed = 0, leaked = 0;
  if (ok12) {
    const Image edit_base = read_exr((edit_dir / (std::string("base_") + stem + ".exr")).string());
    const Image edited = read_exr((edit_dir / (std::string("edit_") + stem + ".exr")).string());
    for (int y = 0; y < edited.height; ++y)
      for (int x = 0; x < edited.width; ++x) {
        const real d = (edited.at(x, y) - edit_base.at(x, y)).cwiseAbs().maxCoeff();
        if (d <= 1e-9) continue;
        ++changed;
        // Allow one pixel of slack where learned and true silhouettes differ.
        bool on_target = false;
        for (int dy = -1; dy <= 1 && !on_target; ++dy)
          for (int dx = -1; dx <= 1 && !on_target; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx >= 0 && ny >= 0 && nx < inst.width && ny < inst.height &&
                inst.at(nx, ny) == 2)
              on_target = true;
          }
        if (!on_target) ++leaked;
      }
    ok12 = changed >= 10 && leaked == 0;
  }

  // Swapped environment: render under a flat warm sky and verify it landed.
  const Vec3 sky(0.9, 0.45, 0.2);
  const fs::path env_path = base / "env_swap.exr";
  write_exr(env_path.string(), rasterize_environment(constant_environment(sky), 64, 32));
  const fs::path relit_dir = base / "relit";
  bool relit_ok = run_cmd(cli + " relight " + env_path.string() + " --config " + cfg_on.string() +
                          " --checkpoint " + (run / "stage2.ckpt").string() + " --out " +
                          relit_dir.string() + " --seed 11 --views " + std::to_string(view) +
                          " --spp 32") == 0;
  real fg_diff = 0.0, bg_err = 0.0;
  if (relit_ok) {
    const Image edit_base = read_exr((edit_dir / (std::string("base_") + stem + ".exr")).string());
    const Image relit = read_exr((relit_dir / (std::string("relight_") + stem + ".exr")).string());
    int fg = 0, bg = 0;
    for (int y = 0; y < relit.height; ++y)
      for (int x = 0; x < relit.width; ++x) {
        if (inst.at(x, y) >= 0) {
          fg_diff += (relit.at(x, y) - edit_base.at(x, y)).cwiseAbs().mean();
          ++fg;
        } else {
          bg_err += (relit.at(x, y) - sky).cwiseAbs().mean();
          ++bg;
        }
      }
    fg_diff /= std::max(1, fg);
    bg_err /= std::max(1, bg);
    relit_ok = fg_diff > 0.01 && bg_err < 0.1;
  }

  report(12, ok12 && relit_ok,
         fmt("relight/edit: %d edited pixels, %d outside the edited primitive; relit foreground "
             "moved %.3f on average, sky matches the swapped map within %.3f",
             changed, leaked, fg_diff, bg_err));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "fast";
  try {
    if (mode == "fast") {
      criterion1();
      criterion2();
      criterion3();
      criterion4();
      criterion5();
      criterion6();
      criterion7();
      criterion8();
      criterion9();
    } else if (mode == "e2e") {
      e2e();
    } else {
      std::fprintf(stderr, "usage: acceptance [fast|e2e]\n");
      return 2;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "{\"error\":\"%s\"}\n", e.what());
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
