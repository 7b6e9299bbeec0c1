#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "facade/dataset.hpp"
#include "facade/sdf.hpp"
#include "facade/sg.hpp"

namespace facade {

struct ScenePrimitive {
  std::shared_ptr<SdfField> sdf;
  Vec3 albedo = Vec3::Constant(0.5);
  real roughness = 0.5;
  real metallic = 0.0;
};

// Closed-form scene: parametric primitives with per-primitive material plus an
// SG environment. Serves as the ground-truth oracle for the whole pipeline.
struct AnalyticScene {
  std::vector<ScenePrimitive> primitives;
  SgMixture env;

  real sdf(const Vec3& x) const;
  int nearest(const Vec3& x) const;
  Vec3 normal(const Vec3& x) const;
};

// Mixture whose value is `value` in every direction.
SgMixture constant_environment(const Vec3& value);

// Default desk-scale benchmark: thin ground slab, diffuse sphere, glossy
// sphere, box, under a smooth three-lobe sky.
AnalyticScene benchmark_scene();

// First intersection distance by sphere tracing, nullopt on miss.
std::optional<real> sphere_trace(const SdfField& field, const Vec3& o, const Vec3& d,
                                 real t_max, real eps = 1e-6);

// Direct illumination at a surface point with its own Cook-Torrance
// implementation (kept separate from the differentiable shading path so the
// two can cross-check each other). Shadows are binary sphere-traced rays.
Vec3 oracle_shade(const AnalyticScene& scene, const Vec3& x, const Vec3& n, const Vec3& omega_o,
                  const ScenePrimitive& prim, int spp, Rng& rng, bool shadows = true);

struct GroundTruthMaps {
  ScalarImage depth;      // camera-space depth, 0 on miss
  Image normal;           // world-space, zero on miss
  Image albedo;
  ScalarImage roughness;
  ScalarImage metallic;
  LabelImage instance;    // primitive index, -1 on miss
};

struct SynthConfig {
  int views = 68;
  int eval_views = 8;
  int width = 64;
  int height = 64;
  int spp = 64;
  real camera_radius = 2.0;
  real fov_deg = 42.0;
  std::uint64_t seed = 1;
  int cloud_points = 20000;  // reference surface samples for geometry metrics
};

// Hemisphere camera rig around the scene, one deterministic low-discrepancy
// direction per view.
Camera synth_camera(const SynthConfig& cfg, int view_index);

// Renders one view with the oracle path; misses show the environment.
Image oracle_render(const AnalyticScene& scene, const Camera& cam, int spp, std::uint64_t seed,
                    GroundTruthMaps* gt = nullptr, bool parallel = true);

// Full dataset: oracle renders, GT maps, instance masks, surface point cloud,
// camera files. When out_dir is nonempty everything is written there in the
// load_dataset layout (GT maps under gt/).
SceneDataset synth_scene(const AnalyticScene& scene, const SynthConfig& cfg,
                         const std::string& out_dir = "",
                         std::vector<GroundTruthMaps>* gt_out = nullptr);

// Surface samples for the reference point cloud (Newton projection of
// near-surface seeds).
std::vector<Vec3> sample_surface_points(const AnalyticScene& scene, int count, Rng& rng);

}  // namespace facade
