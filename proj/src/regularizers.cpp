#include "facade/regularizers.hpp"

namespace facade {

real curvature_weight(real kappa, LaplaceKind kind) {
  if (kappa <= 0.0) throw DomainError("curvature_weight: kappa must be positive");
  if (kind == LaplaceKind::Density) {
    return 0.5 * std::exp(-std::abs(kappa - 1.0));
  }
  return kappa < 1.0 ? 0.5 * std::exp(kappa - 1.0) : 1.0 - 0.5 * std::exp(-(kappa - 1.0));
}

namespace {

// Central-difference gradient with per-component seed reporting.
Vec3 stencil_grad_seeded(const SdfField& field, const Vec3& x, const SdfSeedFn& seed,
                         const Vec3& dgrad) {
  Vec3 g;
  const real h = kLossStencil;
  for (int j = 0; j < 3; ++j) {
    Vec3 a = x, b = x;
    a[j] += h;
    b[j] -= h;
    g[j] = (field.sdf(a) - field.sdf(b)) / (2.0 * h);
    if (seed && dgrad[j] != 0.0) {
      seed(a, dgrad[j] / (2.0 * h));
      seed(b, -dgrad[j] / (2.0 * h));
    }
  }
  return g;
}

}  // namespace

real eikonal_loss(const std::vector<Vec3>& points, const SdfField& field,
                  const SdfSeedFn& seed) {
  if (points.empty()) throw DomainError("eikonal_loss: empty batch");
  real loss = 0.0;
  const real h = kLossStencil;
  for (const Vec3& x : points) {
    Vec3 g;
    for (int j = 0; j < 3; ++j) {
      Vec3 a = x, b = x;
      a[j] += h;
      b[j] -= h;
      g[j] = (field.sdf(a) - field.sdf(b)) / (2.0 * h);
    }
    const real norm = g.norm();
    loss += (norm - 1.0) * (norm - 1.0);
    if (seed && norm > 1e-12) {
      const Vec3 dg = 2.0 * (norm - 1.0) * g / norm;
      for (int j = 0; j < 3; ++j) {
        Vec3 a = x, b = x;
        a[j] += h;
        b[j] -= h;
        seed(a, dg[j] / (2.0 * h));
        seed(b, -dg[j] / (2.0 * h));
      }
    }
  }
  return loss;
}

std::vector<CurvatureProbe> make_curvature_probes(const std::vector<Vec3>& points,
                                                  const std::vector<real>& kappas,
                                                  real epsilon, Rng& rng,
                                                  const SdfField& field, LaplaceKind kind,
                                                  CurvatureProbeStats* stats) {
  if (epsilon <= 0.0) throw DomainError("curvature_loss: epsilon must be positive");
  std::vector<CurvatureProbe> probes;
  probes.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& x = points[i];
    const Vec3 g = field.stencil_grad(x, kLossStencil);
    const real gn = g.norm();
    Vec3 u = uniform_sphere(rng);  // drawn regardless so the stream stays aligned
    if (gn < 1e-8) {
      if (stats) ++stats->skipped;
      continue;
    }
    const Vec3 n = g / gn;
    Vec3 eta = n.cross(u);
    if (eta.norm() < 1e-8) eta = n.cross(orthonormal(n));
    eta.normalize();
    CurvatureProbe p;
    p.x = x;
    p.eta = eta;
    p.x_eps = x + epsilon * eta;
    p.weight = curvature_weight(std::max(kappas.empty() ? 1.0 : kappas[i], 1e-6), kind);
    // The perturbed point must also have a usable normal.
    if (field.stencil_grad(p.x_eps, kLossStencil).norm() < 1e-8) {
      if (stats) ++stats->skipped;
      continue;
    }
    probes.push_back(p);
    if (stats) ++stats->used;
  }
  return probes;
}

real curvature_loss_eval(const std::vector<CurvatureProbe>& probes, const SdfField& field,
                         const SdfSeedFn& seed) {
  real loss = 0.0;
  for (const auto& p : probes) {
    const Vec3 g = field.stencil_grad(p.x, kLossStencil);
    const Vec3 ge = field.stencil_grad(p.x_eps, kLossStencil);
    const real gn = g.norm(), gen = ge.norm();
    if (gn < 1e-12 || gen < 1e-12) continue;
    const Vec3 n = g / gn, ne = ge / gen;
    const real c = n.dot(ne);
    loss += p.weight * (c - 1.0) * (c - 1.0);
    if (seed) {
      const real dc = p.weight * 2.0 * (c - 1.0);
      const Vec3 dg = dc * (ne - c * n) / gn;
      const Vec3 dge = dc * (n - c * ne) / gen;
      stencil_grad_seeded(field, p.x, seed, dg);
      stencil_grad_seeded(field, p.x_eps, seed, dge);
    }
  }
  return loss;
}

real curvature_loss(const std::vector<Vec3>& points, const std::vector<real>& kappas,
                    real epsilon, Rng& rng, const SdfField& field, LaplaceKind kind,
                    CurvatureProbeStats* stats) {
  const auto probes = make_curvature_probes(points, kappas, epsilon, rng, field, kind, stats);
  return curvature_loss_eval(probes, field);
}

}  // namespace facade
