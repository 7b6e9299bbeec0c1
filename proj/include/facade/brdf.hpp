#pragma once

#include <functional>
#include <vector>

#include "facade/math.hpp"
#include "facade/sg.hpp"

namespace facade {

struct ShadingPoint {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 omega_o = Vec3::UnitZ();  // toward the camera
  Vec3 albedo = Vec3::Constant(0.5);
  real roughness = 0.5;
  real metallic = 0.0;
};

// GGX normal distribution D(h) with alpha = roughness^2 remapping applied by
// the caller.
real ggx_ndf(real n_dot_h, real alpha);

struct BrdfSampleOptions {
  bool force_diffuse = false;
  bool force_specular = false;
  // Restricts both the sampler and the integrand to the Lambertian term.
  bool diffuse_only = false;
};

// Cook-Torrance with Fresnel-Schlick (F0 = mix(0.04, albedo, metallic)) and
// Smith-GGX shadowing. `clamped` reports grazing denominators below 1e-7.
Vec3 brdf_eval(const ShadingPoint& sp, const Vec3& omega_i, bool* clamped = nullptr,
               const BrdfSampleOptions& opts = {});

// Accumulates gradients of dot(dout, f_r) into the material parameters.
void brdf_eval_backward(const ShadingPoint& sp, const Vec3& omega_i, const Vec3& dout,
                        Vec3* d_albedo, real* d_roughness, real* d_metallic,
                        const BrdfSampleOptions& opts = {});

struct BrdfSample {
  Vec3 omega_i = Vec3::UnitZ();
  Vec3 half = Vec3::UnitZ();
  real pdf = 0.0;
  bool valid = false;  // false = zero-contribution sentinel
};

// Mixture density of the cosine-diffuse / GGX-half-vector sampler at omega_i.
real brdf_pdf(const ShadingPoint& sp, const Vec3& omega_i,
              const BrdfSampleOptions& opts = {});

BrdfSample sample_brdf(const ShadingPoint& sp, Rng& rng,
                       const BrdfSampleOptions& opts = {});

enum class OccludedMode { Zero, CachedRadiance };

struct ShadeOptions {
  BrdfSampleOptions sampling;
  OccludedMode occluded = OccludedMode::Zero;
  // Radiance along occluded rays in CachedRadiance mode.
  std::function<Vec3(const Vec3& x, const Vec3& dir)> cached_radiance;
};

struct ShadeResult {
  Vec3 color = Vec3::Zero();
  real variance = 0.0;  // sample variance of the luminance estimator
  std::vector<BrdfSample> samples;  // frozen directions and pdfs
};

// Monte-Carlo estimate of the outgoing radiance with BRDF importance
// sampling: (1/m) sum V * Gamma * f_r * cos / pdf. vis may be null (fully
// visible).
ShadeResult shade(const ShadingPoint& sp, const SgMixture& light, const VisibilityGrid* vis,
                  int m, Rng& rng, const ShadeOptions& opts = {});

// Re-evaluates the estimator on frozen samples (detached-sampling
// convention: directions and pdf values are constants).
Vec3 shade_with_samples(const ShadingPoint& sp, const SgMixture& light,
                        const VisibilityGrid* vis, const std::vector<BrdfSample>& samples,
                        const ShadeOptions& opts = {});

// Gradients of dot(dout, estimate) w.r.t. material, light, and visibility
// parameters on the frozen samples. Null outputs are skipped.
void shade_backward(const ShadingPoint& sp, const SgMixture& light, const VisibilityGrid* vis,
                    const std::vector<BrdfSample>& samples, const Vec3& dout,
                    Vec3* d_albedo, real* d_roughness, real* d_metallic, VecX* g_light,
                    VecX* g_vis, const ShadeOptions& opts = {});

}  // namespace facade
