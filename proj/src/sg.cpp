#include "facade/sg.hpp"

#include <omp.h>

#include "facade/fields.hpp"
#include "facade/params.hpp"

namespace facade {

Vec3 sg_eval(const SgLobe& lobe, const Vec3& dir) {
  return lobe.amplitude * std::exp(lobe.sharpness * (dir.dot(lobe.axis) - 1.0));
}

SgLobe sg_decode(const real* raw) {
  SgLobe l;
  Eigen::Map<const Vec3> u(raw);
  const real n = u.norm();
  l.axis = n > 1e-12 ? Vec3(u / n) : Vec3::UnitZ();
  l.sharpness = std::exp(std::clamp(raw[3], -10.0, 10.0));
  l.amplitude = Vec3(softplus(raw[4]), softplus(raw[5]), softplus(raw[6]));
  return l;
}

Vec3 sg_eval_raw(const real* raw, const Vec3& dir) {
  return sg_eval(sg_decode(raw), dir);
}

void sg_eval_raw_backward(const real* raw, const Vec3& dir, const Vec3& drgb, real* graw) {
  const SgLobe l = sg_decode(raw);
  const real cosm1 = dir.dot(l.axis) - 1.0;
  const real e = std::exp(l.sharpness * cosm1);
  const Vec3 v = l.amplitude * e;
  const real dv = drgb.dot(v);  // shared factor for lambda / axis chains

  Eigen::Map<const Vec3> u(raw);
  const real n = u.norm();
  if (n > 1e-12) {
    // d(dir . axis)/du through normalization.
    const Vec3 dmu = (dir - dir.dot(l.axis) * l.axis) / n;
    for (int j = 0; j < 3; ++j) graw[j] += dv * l.sharpness * dmu[j];
  }
  if (raw[3] > -10.0 && raw[3] < 10.0) graw[3] += dv * cosm1 * l.sharpness;
  for (int c = 0; c < 3; ++c) graw[4 + c] += drgb[c] * e * softplus_deriv(raw[4 + c]);
}

SgMixture::SgMixture(int num_lobes, real init_sharpness, real init_amp) : lobes_(num_lobes) {
  theta_ = VecX::Zero(static_cast<Eigen::Index>(num_lobes) * kSgLobeParams);
  for (int i = 0; i < num_lobes; ++i) {
    const Vec3 ax = sphere_sequence_dir(static_cast<std::size_t>(i));
    real* p = theta_.data() + i * kSgLobeParams;
    p[0] = ax.x();
    p[1] = ax.y();
    p[2] = ax.z();
    p[3] = std::log(init_sharpness);
    p[4] = p[5] = p[6] = softplus_inverse(std::max(init_amp, 1e-6));
  }
}

Vec3 SgMixture::eval(const Vec3& dir) const {
  Vec3 out = Vec3::Zero();
  for (int i = 0; i < lobes_; ++i) out += sg_eval_raw(theta_.data() + i * kSgLobeParams, dir);
  return out;
}

real SgMixture::scalar_eval(const Vec3& dir) const { return eval(dir).mean(); }

void SgMixture::backward(const Vec3& dir, const Vec3& drgb, VecX& graw) const {
  for (int i = 0; i < lobes_; ++i)
    sg_eval_raw_backward(theta_.data() + i * kSgLobeParams, dir,
                         drgb, graw.data() + i * kSgLobeParams);
}

SgMixture fit_sg_mixture(const std::vector<Vec3>& dirs, const std::vector<Vec3>& values,
                         int num_lobes, const SgFitOptions& opt) {
  const Eigen::Index m = static_cast<Eigen::Index>(dirs.size());
  SgMixture mix(num_lobes);

  // Stage 1: ridge least squares on the amplitudes with fixed axes/sharpness.
  MatX basis(m, num_lobes);
  for (Eigen::Index r = 0; r < m; ++r)
    for (int i = 0; i < num_lobes; ++i) {
      const SgLobe l = mix.lobe(i);
      basis(r, i) = std::exp(l.sharpness * (dirs[r].dot(l.axis) - 1.0));
    }
  MatX ata = basis.transpose() * basis;
  ata.diagonal().array() += opt.ridge * static_cast<real>(m);
  Eigen::LDLT<MatX> solver(ata);
  for (int c = 0; c < 3; ++c) {
    VecX rhs(m);
    for (Eigen::Index r = 0; r < m; ++r) rhs[r] = values[r][c];
    VecX amp = solver.solve(basis.transpose() * rhs);
    for (int i = 0; i < num_lobes; ++i) {
      real a = amp[i];
      if (opt.nonnegative) a = std::max(a, 1e-6);
      mix.theta()[i * kSgLobeParams + 4 + c] = softplus_inverse(std::max(a, 1e-6));
    }
  }

  // Stage 2: Adam refinement of all raw parameters on the same samples.
  if (opt.refine_iters > 0 && m > 0) {
    std::vector<ParamGroup> groups;
    groups.emplace_back("sg", &mix.theta());
    Adam adam(AdamConfig{.lr = opt.refine_lr});
    for (int it = 0; it < opt.refine_iters; ++it) {
      groups[0].zero_grad();
      for (Eigen::Index r = 0; r < m; ++r) {
        const Vec3 pred = mix.eval(dirs[r]);
        const Vec3 d = 2.0 * (pred - values[r]) / static_cast<real>(m);
        mix.backward(dirs[r], d, groups[0].grad);
      }
      adam.step(groups);
    }
  }
  return mix;
}

SgMixture fit_environment(const Image& equirect, int num_lobes, const SgFitOptions& opt) {
  std::vector<Vec3> dirs, vals;
  // Subsample to a bounded budget; weight rows by solid angle via stratified
  // row selection in cos(theta).
  const int target = 4096;
  const int stride = std::max(1, static_cast<int>(
      std::sqrt(static_cast<double>(equirect.width) * equirect.height / target)));
  for (int y = 0; y < equirect.height; y += stride) {
    const real theta = kPi * (y + 0.5) / equirect.height;
    const real w = std::sin(theta);
    if (w < 1e-4) continue;
    for (int x = 0; x < equirect.width; x += stride) {
      const real phi = 2.0 * kPi * ((x + 0.5) / equirect.width - 0.5);
      dirs.emplace_back(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                        std::cos(theta));
      vals.push_back(equirect.at(x, y));
    }
  }
  return fit_sg_mixture(dirs, vals, num_lobes, opt);
}

Image rasterize_environment(const SgMixture& env, int width, int height) {
  Image img(width, height);
  for (int y = 0; y < height; ++y) {
    const real theta = kPi * (y + 0.5) / height;
    for (int x = 0; x < width; ++x) {
      const real phi = 2.0 * kPi * ((x + 0.5) / width - 0.5);
      const Vec3 dir(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                     std::cos(theta));
      img.at(x, y) = env.eval(dir);
    }
  }
  return img;
}

real visibility_oracle(const SdfField& field, const Vec3& x, const Vec3& dir,
                       const VisibilityMarchConfig& cfg) {
  const real dt = (cfg.t_max - cfg.t_start) / cfg.steps;
  real transmittance = 1.0;
  for (int i = 0; i < cfg.steps; ++i) {
    const real t = cfg.t_start + (i + 0.5) * dt;
    const real s = field.sdf(x + t * dir);
    const real sigma = sdf_to_density(s, cfg.beta);
    transmittance *= std::exp(-sigma * dt);
    if (transmittance < 1e-5) return 0.0;
  }
  return transmittance;
}

VisibilityGrid::VisibilityGrid(const VisibilityGridConfig& cfg) : cfg_(cfg) {
  theta_ = VecX::Zero(node_count() * params_per_node());
  const SgMixture proto(cfg.num_lobes, 10.0, 1.0);  // start fully visible
  for (Eigen::Index n = 0; n < node_count(); ++n)
    theta_.segment(n * params_per_node(), params_per_node()) = proto.theta();
}

Vec3 VisibilityGrid::node_center(int i, int j, int k) const {
  const real step = (cfg_.bbox_max - cfg_.bbox_min) / (cfg_.resolution - 1);
  return {cfg_.bbox_min + i * step, cfg_.bbox_min + j * step, cfg_.bbox_min + k * step};
}

real VisibilityGrid::node_eval(Eigen::Index node, const Vec3& dir) const {
  const real* base = theta_.data() + node * params_per_node();
  Vec3 v = Vec3::Zero();
  for (int i = 0; i < cfg_.num_lobes; ++i) v += sg_eval_raw(base + i * kSgLobeParams, dir);
  return v.mean();
}

bool VisibilityGrid::locate(const Vec3& x, Eigen::Index corner[8], real weight[8]) const {
  const int r = cfg_.resolution;
  const real scale = (r - 1) / (cfg_.bbox_max - cfg_.bbox_min);
  real u[3];
  int idx[3];
  real frac[3];
  for (int j = 0; j < 3; ++j) {
    u[j] = (x[j] - cfg_.bbox_min) * scale;
    if (u[j] < 0.0 || u[j] > r - 1) return false;
    idx[j] = std::min(static_cast<int>(u[j]), r - 2);
    frac[j] = u[j] - idx[j];
  }
  int c = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx, ++c) {
        corner[c] = (static_cast<Eigen::Index>(idx[2] + dz) * r + (idx[1] + dy)) * r +
                    (idx[0] + dx);
        weight[c] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                    (dz ? frac[2] : 1.0 - frac[2]);
      }
  return true;
}

real VisibilityGrid::query(const Vec3& x, const Vec3& dir) const {
  Eigen::Index corner[8];
  real weight[8];
  if (!locate(x, corner, weight)) return 1.0;
  real v = 0.0;
  for (int c = 0; c < 8; ++c) v += weight[c] * node_eval(corner[c], dir);
  return clamp01(v);
}

void VisibilityGrid::query_backward(const Vec3& x, const Vec3& dir, real dval,
                                    VecX& graw) const {
  Eigen::Index corner[8];
  real weight[8];
  if (!locate(x, corner, weight)) return;
  real v = 0.0;
  for (int c = 0; c < 8; ++c) v += weight[c] * node_eval(corner[c], dir);
  if (v <= 0.0 || v >= 1.0) return;  // clamp active
  const Vec3 drgb = Vec3::Constant(dval / 3.0);  // channel mean
  for (int c = 0; c < 8; ++c) {
    real* g = graw.data() + corner[c] * params_per_node();
    const real* base = theta_.data() + corner[c] * params_per_node();
    for (int i = 0; i < cfg_.num_lobes; ++i)
      sg_eval_raw_backward(base + i * kSgLobeParams, dir, weight[c] * drgb,
                           g + i * kSgLobeParams);
  }
}

VisibilityFitReport fit_visibility_grid(const SdfField& field, VisibilityGrid& grid,
                                        const VisibilityFitConfig& cfg,
                                        const VisibilityMarchConfig& march) {
  const int r = grid.resolution();
  const Eigen::Index nodes = grid.node_count();
  std::vector<real> node_err(static_cast<std::size_t>(nodes), 0.0);

#pragma omp parallel for collapse(2) schedule(dynamic, 4) if (cfg.parallel)
  for (int k = 0; k < r; ++k)
    for (int j = 0; j < r; ++j)
      for (int i = 0; i < r; ++i) {
        const Eigen::Index node = (static_cast<Eigen::Index>(k) * r + j) * r + i;
        const Vec3 center = grid.node_center(i, j, k);
        Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(node + 1)));
        std::vector<Vec3> dirs(cfg.dirs_per_node);
        std::vector<Vec3> vals(cfg.dirs_per_node);
        // Probe a prefix first: most nodes see either everything or nothing,
        // and a constant mixture is exact there without the refinement fit.
        const int probe = std::min(8, cfg.dirs_per_node);
        bool all_open = true, all_blocked = true;
        for (int d = 0; d < cfg.dirs_per_node; ++d) {
          Vec3 dir = sphere_sequence_dir(static_cast<std::size_t>(d));
          // Small jitter so neighboring nodes do not share the exact rays.
          dir = (dir + 0.05 * uniform_sphere(rng)).normalized();
          dirs[d] = dir;
          vals[d] = Vec3::Constant(visibility_oracle(field, center, dir, march));
          if (d + 1 == probe) {
            for (int p = 0; p < probe; ++p) {
              all_open = all_open && vals[p][0] > 1.0 - 5e-3;
              all_blocked = all_blocked && vals[p][0] < 5e-3;
            }
            if (all_open || all_blocked) break;
          }
        }
        if (all_open || all_blocked) {
          // Near-constant mixture so trilinear blends against fitted
          // neighbors stay sensible.
          const int nl = grid.config().num_lobes;
          const SgMixture flat(nl, 1e-3, all_open ? 1.05 / nl : 1e-6);
          grid.theta().segment(node * grid.params_per_node(), grid.params_per_node()) =
              flat.theta();
          continue;
        }
        SgMixture fitted = fit_sg_mixture(dirs, vals, grid.config().num_lobes, cfg.fit);
        real err = 0.0;
        for (int d = 0; d < cfg.dirs_per_node; ++d)
          err += std::abs(clamp01(fitted.eval(dirs[d]).mean()) - vals[d][0]);
        node_err[static_cast<std::size_t>(node)] = err / cfg.dirs_per_node;
        grid.theta().segment(node * grid.params_per_node(), grid.params_per_node()) =
            fitted.theta();
      }

  VisibilityFitReport report;
  report.nodes = nodes;
  for (real e : node_err) report.mean_abs_error += e;
  report.mean_abs_error /= static_cast<real>(nodes);
  return report;
}

}  // namespace facade
