#include "facade/renderer.hpp"

#include <omp.h>

namespace facade {

Ray Camera::generate_ray(real u, real v) const {
  if (fx == 0.0 || fy == 0.0) throw DomainError("generate_ray: singular intrinsics");
  const Vec3 dir_cam((u - cx) / fx, (v - cy) / fy, 1.0);
  Ray ray;
  ray.origin = position();
  ray.dir = (cam_to_world.block<3, 3>(0, 0) * dir_cam).normalized();
  ray.u = u;
  ray.v = v;
  return ray;
}

bool Camera::project(const Vec3& p, real* u, real* v, real* depth) const {
  const Mat4 world_to_cam = cam_to_world.inverse();
  const Vec3 pc = world_to_cam.block<3, 3>(0, 0) * p + world_to_cam.block<3, 1>(0, 3);
  if (pc.z() <= 1e-9) return false;
  if (u) *u = fx * pc.x() / pc.z() + cx;
  if (v) *v = fy * pc.y() / pc.z() + cy;
  if (depth) *depth = pc.z();
  return true;
}

std::vector<real> sample_points(real t_near, real t_far, int count, bool jitter, Rng* rng) {
  if (count < 1) throw DomainError("sample_points: count must be >= 1");
  std::vector<real> t(count);
  const real span = (t_far - t_near) / count;
  for (int i = 0; i < count; ++i) {
    const real off = jitter && rng ? uniform(*rng) : 0.5;
    t[i] = t_near + (i + off) * span;
  }
  return t;
}

CompositeResult composite(const std::vector<real>& sigma, const std::vector<Vec3>& color,
                          const std::vector<real>& delta) {
  const std::size_t n = sigma.size();
  CompositeResult res;
  res.alpha.resize(n);
  res.weight.resize(n);
  real trans = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sigma[i] < 0.0) throw DomainError("composite: negative density");
    res.alpha[i] = 1.0 - std::exp(-sigma[i] * delta[i]);
    res.weight[i] = trans * res.alpha[i];
    res.color += res.weight[i] * color[i];
    trans *= 1.0 - res.alpha[i];
  }
  res.transmittance = trans;
  return res;
}

void composite_backward(const std::vector<real>& sigma, const std::vector<Vec3>& color,
                        const std::vector<real>& delta, const CompositeResult& res,
                        const Vec3& dcolor, real dtrans, std::vector<real>* dsigma,
                        std::vector<Vec3>* dcolor_n) {
  const std::size_t n = sigma.size();
  if (dsigma) dsigma->assign(n, 0.0);
  if (dcolor_n) dcolor_n->assign(n, Vec3::Zero());

  // dC/dalpha_k = T_k c_k - sum_{j>k} w_j c_j / (1 - alpha_k); dT/dalpha_k
  // handled by the same suffix trick. Accumulate the suffix sum backwards.
  std::vector<real> trans_before(n);
  real trans = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    trans_before[i] = trans;
    trans *= 1.0 - res.alpha[i];
  }
  Vec3 suffix = Vec3::Zero();  // sum over j > k of w_j c_j (dcolor-weighted below)
  real dsuffix = dtrans * res.transmittance;
  for (std::size_t k = n; k-- > 0;) {
    const real one_minus = 1.0 - res.alpha[k];
    real dalpha = dcolor.dot(trans_before[k] * color[k]);
    if (one_minus > 1e-12) {
      dalpha -= dcolor.dot(suffix) / one_minus;
      dalpha -= dsuffix / one_minus;
    }
    if (dsigma) (*dsigma)[k] = dalpha * (1.0 - res.alpha[k]) * delta[k];
    if (dcolor_n) (*dcolor_n)[k] = dcolor * res.weight[k];
    suffix += res.weight[k] * color[k];
  }
}

Vec4 invert_sphere_param(const Vec3& x) {
  const real r = x.norm();
  if (r <= 1.0) throw DomainError("invert_sphere_param: point inside unit sphere");
  return {x.x() / r, x.y() / r, x.z() / r, 1.0 / r};
}

std::optional<std::pair<real, real>> ray_sphere_intersect(const Vec3& o, const Vec3& d,
                                                          real radius) {
  const real b = o.dot(d);
  const real c = o.squaredNorm() - radius * radius;
  const real disc = b * b - c;
  if (disc <= 0.0) return std::nullopt;
  const real sq = std::sqrt(disc);
  real t0 = -b - sq, t1 = -b + sq;
  if (t1 <= 0.0) return std::nullopt;
  t0 = std::max(t0, 0.0);
  return std::make_pair(t0, t1);
}

namespace {

// Background compositing along the outer segment of the ray, parameterized by
// inverse distance from the origin.
Vec3 composite_background(const NeuralScene& scene, const Ray& ray, const RenderConfig& cfg,
                          real t_start) {
  const int n = cfg.bg_samples;
  if (n <= 0) return Vec3::Zero();
  std::vector<real> ts(n);
  std::vector<Vec3> rgb(n);
  std::vector<real> sigma(n);
  const real b = ray.origin.dot(ray.dir);
  // inv_r from 1 down to bg_inv_r_min, stratified midpoints.
  for (int i = 0; i < n; ++i) {
    const real inv_r = 1.0 - (i + 0.5) * (1.0 - cfg.bg_inv_r_min) / n;
    const real r = cfg.sphere_radius / inv_r;
    const real disc = b * b - (ray.origin.squaredNorm() - r * r);
    const real t = -b + std::sqrt(std::max(disc, 0.0));
    ts[i] = std::max(t, t_start);
    const Vec3 p = ray.origin + ts[i] * ray.dir;
    const real pr = std::max(p.norm(), cfg.sphere_radius * (1.0 + 1e-9));
    const Vec4 ip(p.x() / pr, p.y() / pr, p.z() / pr, cfg.sphere_radius / pr);
    real s;
    Vec3 c;
    scene.background.eval(ip, &s, &c);
    sigma[i] = s;
    rgb[i] = c;
  }
  std::vector<real> delta(n);
  for (int i = 0; i + 1 < n; ++i) delta[i] = std::max(ts[i + 1] - ts[i], 1e-6);
  delta[n - 1] = delta[std::max(n - 2, 0)];
  const CompositeResult res = composite(sigma, rgb, delta);
  return res.color;
}

}  // namespace

Vec3 render_pixel(const NeuralScene& scene, const Ray& ray, const RenderConfig& cfg,
                  Rng* rng, PixelAux* aux) {
  Vec3 fg_color = Vec3::Zero();
  real t_fg = 1.0;
  real bg_start = 0.0;
  const auto hit = ray_sphere_intersect(ray.origin, ray.dir, cfg.sphere_radius);
  if (hit) {
    const auto [t0, t1] = *hit;
    bg_start = t1;
    const std::vector<real> ts =
        sample_points(t0, t1, cfg.fg_samples, cfg.jitter, rng);
    const int n = cfg.fg_samples;
    std::vector<real> sigma(n);
    std::vector<Vec3> rgb(n);
    std::vector<real> delta(n);
    for (int i = 0; i < n; ++i) delta[i] = (i + 1 < n ? ts[i + 1] : t1) - ts[i];
    const real beta = scene.beta();
    for (int i = 0; i < n; ++i) {
      const Vec3 x = ray.origin + ts[i] * ray.dir;
      const GeometryOutput g = scene.geometry.eval(x);
      sigma[i] = sdf_to_density(g.s, beta);
      Vec3 c = scene.diffuse.eval(x, g.z);
      if (cfg.use_specular) {
        Vec3 grad = scene.geometry.sdf_grad(x);
        const real gn = grad.norm();
        if (gn > 1e-8) {
          const Vec3 normal = grad / gn;
          const Vec3 cs = scene.specular.eval(x, g.z, g.rho, ray.dir, normal, g.q);
          c = compose_color(c, cs, g.q);
        }
      }
      rgb[i] = c;
    }
    const CompositeResult res = composite(sigma, rgb, delta);
    fg_color = res.color;
    t_fg = res.transmittance;
    if (aux) {
      aux->weight_sum = 0.0;
      aux->depth = 0.0;
      for (int i = 0; i < n; ++i) {
        aux->weight_sum += res.weight[i];
        aux->depth += res.weight[i] * ts[i];
      }
      if (aux->weight_sum > 1e-9) aux->depth /= aux->weight_sum;
    }
  }
  if (aux) aux->t_fg = t_fg;
  Vec3 bg = Vec3::Zero();
  if (t_fg > 1e-5) bg = composite_background(scene, ray, cfg, bg_start);
  return fg_color + t_fg * bg;
}

Image render_image(const NeuralScene& scene, const Camera& camera, const RenderConfig& cfg,
                   bool parallel) {
  Image img(camera.width, camera.height);
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const Ray ray = camera.generate_ray(x + 0.5, y + 0.5);
      img.at(x, y) = render_pixel(scene, ray, cfg);
    }
  }
  return img;
}

}  // namespace facade
