#pragma once

#include <optional>
#include <vector>

#include "facade/image.hpp"
#include "facade/model.hpp"

namespace facade {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = Vec3::UnitZ();  // unit
  real u = 0.0, v = 0.0;     // continuous pixel coordinates
  real t_near = 0.0;
  real t_far = 0.0;
};

// Pinhole camera: intrinsics (fx, fy, cx, cy) plus a 4x4 camera-to-world
// pose. The camera looks along +z in its own frame.
struct Camera {
  real fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Mat4 cam_to_world = Mat4::Identity();

  Vec3 position() const { return cam_to_world.block<3, 1>(0, 3); }

  Ray generate_ray(real u, real v) const;

  // Projects a world point; returns (u, v) and camera-space depth.
  bool project(const Vec3& p, real* u, real* v, real* depth) const;
};

// Stratified distances in [t_near, t_far]; midpoints when jitter is off.
std::vector<real> sample_points(real t_near, real t_far, int count, bool jitter, Rng* rng);

struct CompositeResult {
  Vec3 color = Vec3::Zero();
  real transmittance = 1.0;
  std::vector<real> alpha;
  std::vector<real> weight;
};

// Front-to-back alpha compositing: alpha_n = 1 - exp(-sigma_n delta_n).
CompositeResult composite(const std::vector<real>& sigma, const std::vector<Vec3>& color,
                          const std::vector<real>& delta);

// Gradients of (dcolor . C + dtrans * T) w.r.t. every sigma_n and color_n.
void composite_backward(const std::vector<real>& sigma, const std::vector<Vec3>& color,
                        const std::vector<real>& delta, const CompositeResult& res,
                        const Vec3& dcolor, real dtrans, std::vector<real>* dsigma,
                        std::vector<Vec3>* dcolor_n);

// Inverted-sphere coordinates (x', y', z', 1/r) for points outside the unit
// sphere.
Vec4 invert_sphere_param(const Vec3& x);

// Intersection of a ray with the sphere of given radius around the origin;
// returns entry/exit distances clamped to t >= 0.
std::optional<std::pair<real, real>> ray_sphere_intersect(const Vec3& o, const Vec3& d,
                                                          real radius);

struct RenderConfig {
  int fg_samples = 64;
  int bg_samples = 32;
  bool jitter = false;
  real sphere_radius = 1.0;
  real bg_inv_r_min = 1e-3;  // background reaches out to r = 1/bg_inv_r_min
  bool use_specular = true;
};

struct PixelAux {
  real t_fg = 1.0;      // foreground transmittance
  real depth = 0.0;     // expectation of sample distance under the weights
  real weight_sum = 0.0;
  Vec3 normal = Vec3::Zero();
};

// Full foreground + background pixel color: C_fg + T_fg * C_bg.
Vec3 render_pixel(const NeuralScene& scene, const Ray& ray, const RenderConfig& cfg,
                  Rng* rng = nullptr, PixelAux* aux = nullptr);

Image render_image(const NeuralScene& scene, const Camera& camera, const RenderConfig& cfg,
                   bool parallel = true);

}  // namespace facade
