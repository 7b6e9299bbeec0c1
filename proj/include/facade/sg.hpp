#pragma once

#include <functional>
#include <vector>

#include "facade/image.hpp"
#include "facade/math.hpp"
#include "facade/sdf.hpp"

namespace facade {

// One spherical Gaussian lobe a * exp(lambda * (dir . axis - 1)).
struct SgLobe {
  Vec3 axis = Vec3::UnitZ();  // unit
  real sharpness = 1.0;       // > 0
  Vec3 amplitude = Vec3::Zero();
};

Vec3 sg_eval(const SgLobe& lobe, const Vec3& dir);

// Raw 7-parameter encoding of a lobe: axis (unnormalized 3-vector),
// log sharpness, softplus-mapped amplitude. Shared by SgMixture and the
// visibility grid so both optimize unconstrained parameters.
inline constexpr int kSgLobeParams = 7;

SgLobe sg_decode(const real* raw);
Vec3 sg_eval_raw(const real* raw, const Vec3& dir);
// Accumulates d(dot(drgb, value))/d(raw) into graw[0..6].
void sg_eval_raw_backward(const real* raw, const Vec3& dir, const Vec3& drgb, real* graw);

// Fixed-size mixture of lobes; represents environment radiance or
// direction-dependent visibility.
class SgMixture {
 public:
  SgMixture() = default;
  explicit SgMixture(int num_lobes, real init_sharpness = 10.0, real init_amp = 0.0);

  int num_lobes() const { return lobes_; }
  VecX& theta() { return theta_; }
  const VecX& theta() const { return theta_; }
  SgLobe lobe(int i) const { return sg_decode(theta_.data() + i * kSgLobeParams); }

  Vec3 eval(const Vec3& dir) const;
  real scalar_eval(const Vec3& dir) const;  // channel mean
  void backward(const Vec3& dir, const Vec3& drgb, VecX& graw) const;

 private:
  int lobes_ = 0;
  VecX theta_;
};

struct SgFitOptions {
  real ridge = 1e-4;
  int refine_iters = 400;
  real refine_lr = 5e-2;
  bool nonnegative = true;
};

// Least-squares amplitude fit over fixed low-discrepancy axes, then Adam
// refinement of all raw parameters. Deterministic.
SgMixture fit_sg_mixture(const std::vector<Vec3>& dirs, const std::vector<Vec3>& values,
                         int num_lobes, const SgFitOptions& opt = {});

// Environment map import/export in equirectangular layout.
SgMixture fit_environment(const Image& equirect, int num_lobes, const SgFitOptions& opt = {});
Image rasterize_environment(const SgMixture& env, int width, int height);

struct VisibilityMarchConfig {
  real t_start = 5e-3;
  real t_max = 2.5;
  int steps = 192;
  real beta = 5e-3;  // sharpness of the SDF-to-density transform
};

// Transmittance of a ray marched through the SDF (Eq. 1 machinery with the
// color terms ignored). Offset the origin along the surface normal before
// calling when starting from a surface point.
real visibility_oracle(const SdfField& field, const Vec3& x, const Vec3& dir,
                       const VisibilityMarchConfig& cfg = {});

struct VisibilityGridConfig {
  int resolution = 50;
  int num_lobes = 24;
  real bbox_min = -1.0;
  real bbox_max = 1.0;
};

// Lattice of SG mixtures over the foreground bounding cube. Visibility is the
// trilinear blend of the eight surrounding node mixtures, clamped to [0,1];
// points outside the grid are treated as fully visible.
class VisibilityGrid {
 public:
  VisibilityGrid() = default;
  explicit VisibilityGrid(const VisibilityGridConfig& cfg);

  const VisibilityGridConfig& config() const { return cfg_; }
  int resolution() const { return cfg_.resolution; }
  Eigen::Index node_count() const {
    return static_cast<Eigen::Index>(cfg_.resolution) * cfg_.resolution * cfg_.resolution;
  }
  Eigen::Index params_per_node() const {
    return static_cast<Eigen::Index>(cfg_.num_lobes) * kSgLobeParams;
  }
  VecX& theta() { return theta_; }
  const VecX& theta() const { return theta_; }

  Vec3 node_center(int i, int j, int k) const;
  real node_eval(Eigen::Index node, const Vec3& dir) const;

  real query(const Vec3& x, const Vec3& dir) const;
  // Gradient of query w.r.t. grid parameters (zero where the clamp is
  // active or the point is outside the grid).
  void query_backward(const Vec3& x, const Vec3& dir, real dval, VecX& graw) const;

 private:
  bool locate(const Vec3& x, Eigen::Index corner[8], real weight[8]) const;

  VisibilityGridConfig cfg_;
  VecX theta_;
};

struct VisibilityFitConfig {
  int dirs_per_node = 128;
  SgFitOptions fit;
  bool parallel = true;
  std::uint64_t seed = 7;
};

struct VisibilityFitReport {
  real mean_abs_error = 0.0;  // on the fit samples
  Eigen::Index nodes = 0;
};

// Fits every node mixture against the ray-marched oracle.
VisibilityFitReport fit_visibility_grid(const SdfField& field, VisibilityGrid& grid,
                                        const VisibilityFitConfig& cfg,
                                        const VisibilityMarchConfig& march = {});

}  // namespace facade
