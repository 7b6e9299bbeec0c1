#pragma once

#include <functional>
#include <vector>

#include "facade/math.hpp"
#include "facade/sdf.hpp"

namespace facade {

// Weighting of the curvature loss by a Laplace function of the specular
// concentration kappa (mu = 1, b = 1). The CDF reading is the default:
// larger kappa (more specular) gets a larger smoothing weight. The density
// reading remains available behind the flag.
enum class LaplaceKind { Cdf, Density };

real curvature_weight(real kappa, LaplaceKind kind = LaplaceKind::Cdf);

// Stencil step used by both losses when differentiating the field in x.
// Keeping the stencil inside the loss definition keeps parameter gradients of
// learned fields first-order.
inline constexpr real kLossStencil = 1e-4;

// Reports (stencil point, dL/ds at that point) so the caller can
// backpropagate into field parameters.
using SdfSeedFn = std::function<void(const Vec3&, real)>;

// Sum over points of (||grad s|| - 1)^2 using the central-difference stencil.
real eikonal_loss(const std::vector<Vec3>& points, const SdfField& field,
                  const SdfSeedFn& seed = {});

// One curvature probe: base point, frozen unit tangent (orthogonal to the
// normal at construction time), perturbed point, and Laplace weight.
struct CurvatureProbe {
  Vec3 x;
  Vec3 eta;
  Vec3 x_eps;
  real weight = 1.0;
};

struct CurvatureProbeStats {
  int used = 0;
  int skipped = 0;  // degenerate normals at construction
};

// Builds probes with tangent eta = normalize(n x u) for random unit u. The
// tangent and perturbed position are frozen; only the two normals stay in the
// differentiable graph of the loss.
std::vector<CurvatureProbe> make_curvature_probes(const std::vector<Vec3>& points,
                                                  const std::vector<real>& kappas,
                                                  real epsilon, Rng& rng,
                                                  const SdfField& field,
                                                  LaplaceKind kind = LaplaceKind::Cdf,
                                                  CurvatureProbeStats* stats = nullptr);

// Sum over probes of w * (n . n_eps - 1)^2 with stencil normals.
real curvature_loss_eval(const std::vector<CurvatureProbe>& probes, const SdfField& field,
                         const SdfSeedFn& seed = {});

// Convenience wrapper: build probes and evaluate in one call.
real curvature_loss(const std::vector<Vec3>& points, const std::vector<real>& kappas,
                    real epsilon, Rng& rng, const SdfField& field,
                    LaplaceKind kind = LaplaceKind::Cdf,
                    CurvatureProbeStats* stats = nullptr);

}  // namespace facade
