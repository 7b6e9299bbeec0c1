#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "facade/dataset.hpp"
#include "facade/model.hpp"
#include "facade/params.hpp"
#include "facade/regularizers.hpp"
#include "facade/semantic.hpp"

namespace facade {

struct Stage1Config {
  int steps = 1500;
  int rays_per_batch = 256;
  int fg_samples = 32;
  int bg_samples = 16;
  bool use_specular = true;
  real lambda_eik = 0.1;
  real lambda_curv_init = 1.0;  // decays to 0 over the stage
  // Optional silhouette term |fg_opacity - mask| on views that carry masks.
  // Anchors the geometry against foreground/background ambiguity.
  real lambda_mask = 0.0;
  // During the first steps the density gradient comes from the silhouette
  // term alone, so the photometric loss cannot carve the surface away
  // before the radiance fields have converged.
  int mask_warmup = 0;
  // Surface anchoring |s(p)| on samples of the dataset point cloud. Keeps the
  // photometric loss from carving the foreground away entirely.
  real lambda_points = 0.0;
  int point_batch = 128;
  real low_kappa_fraction = 0.1;  // low-concentration regions finish decaying here
  real kappa_split = 10.0;        // region boundary on kappa = 1/rho
  int reg_points = 48;            // probe points per step for both regularizers
  real curvature_eps = 0.02;
  real beta_start = 0.1;  // Laplace scale, annealed geometrically
  real beta_end = 2e-3;
  LaplaceKind laplace = LaplaceKind::Cdf;
  AdamConfig adam;
};

struct Stage2Config {
  int steps = 500;
  int rays_per_batch = 96;
  int spp = 24;
  bool sam_enabled = true;
  real sam_weight = 0.1;  // each of the three property losses
  int cluster_period = 50;
  int cluster_samples = 400;
  int albedo_k = 2;
  int roughness_k = 2;
  int metallic_k = 2;
  SilhouetteCriterion silhouette = SilhouetteCriterion::Minimize;
  bool fit_visibility = true;  // warmup fit against the ray-marched oracle
  VisibilityFitConfig vis_fit;
  real trace_t_max = 3.0;
  AdamConfig adam;
};

// Linear curvature-weight decay: 1 at epoch 0, 0 at the end of the stage for
// high-concentration regions, 0 after `low_fraction` of the stage otherwise.
real lambda_schedule(int epoch, int total, bool high_kappa, real low_fraction = 0.1);

struct LossBreakdown {
  int step = 0;
  real total = 0.0;
  real color = 0.0;
  real mask = 0.0;       // weighted silhouette term
  real points = 0.0;     // weighted surface-anchor term
  real curvature = 0.0;  // already weighted by the schedule
  real eikonal = 0.0;
  real sam_albedo = 0.0;
  real sam_roughness = 0.0;
  real sam_metallic = 0.0;
  real lambda1 = 0.0;  // high-region curvature weight this step
  bool skipped = false;  // non-finite loss, update aborted
};

// Owns the optimization loop over a NeuralScene against a dataset. Stage 1
// fits geometry and view-dependent color; stage 2 freezes them and fits
// material, environment light, and the visibility grid.
class Trainer {
 public:
  Trainer(NeuralScene& scene, const SceneDataset& dataset, std::uint64_t seed);

  void begin_stage1(const Stage1Config& cfg);
  LossBreakdown stage1_step();

  void begin_stage2(const Stage2Config& cfg);
  LossBreakdown stage2_step();

  int stage() const { return stage_; }
  int step_index() const { return step_; }
  NeuralScene& scene() { return scene_; }
  const std::vector<LossBreakdown>& history() const { return history_; }
  std::vector<ParamGroup>& groups() { return groups_; }
  Rng& rng() { return rng_; }
  const std::vector<VecX>& albedo_centers() const { return albedo_centers_; }

  // Model + optimizer moments + rng + step counters. restore() expects the
  // matching begin_stageN() to have been called already.
  void save(const std::string& path) const;
  void restore(const std::string& path);

  void write_loss_csv(const std::string& path) const;

 private:
  LossBreakdown color_pass_stage1(LossBreakdown rec);
  void point_anchor_pass(LossBreakdown& rec);
  void regularizer_pass(LossBreakdown& rec);
  void refresh_clusters();
  Ray sample_train_ray(Vec3* ref_color, int* view_id, int* px, int* py);
  void zero_grads();
  bool apply_step(LossBreakdown& rec);

  NeuralScene& scene_;
  const SceneDataset& dataset_;
  Rng rng_;
  std::vector<ParamGroup> groups_;
  std::unique_ptr<Adam> adam_;
  Stage1Config cfg1_;
  Stage2Config cfg2_;
  int stage_ = 0;
  int step_ = 0;
  std::vector<LossBreakdown> history_;

  // Stage-2 cluster state (centers are constants between refreshes).
  std::vector<VecX> albedo_centers_, roughness_centers_, metallic_centers_;
  int albedo_k_ = 0, roughness_k_ = 0, metallic_k_ = 0;
};

// Model-only checkpoint io (configuration + every parameter tensor).
void save_checkpoint(const std::string& path, const NeuralScene& scene);
NeuralScene load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Finite-difference verification harness.
// ---------------------------------------------------------------------------

struct GradCheckReport {
  std::string name;
  real max_rel_error = 0.0;
  int probes = 0;
  bool ok = false;
};

// Max over random parameter probes of |analytic - central difference| /
// max(1, |central difference|).
real fd_probe_max_error(const std::function<real()>& loss, VecX& theta, const VecX& grad,
                        int probes, Rng& rng, real step = 1e-4);

// Runs the FD check over every differentiable operation in the pipeline.
std::vector<GradCheckReport> run_gradient_checks(std::uint64_t seed, int probes_per_op = 50,
                                                 real threshold = 1e-3);

}  // namespace facade
