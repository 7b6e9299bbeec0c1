#include "facade/encodings.hpp"

#include <algorithm>
#include <cmath>

namespace facade {

VecX FrequencyEncoding::encode(const VecX& x) const {
  if (!all_finite(x)) throw DomainError("frequency_encode: non-finite input");
  const int d = static_cast<int>(x.size());
  VecX out(output_dim(d));
  Eigen::Index o = 0;
  if (append_raw_) {
    out.head(d) = x;
    o = d;
  }
  for (int k = 0; k < num_bands_; ++k) {
    const real f = std::ldexp(kPi, k);  // 2^k * pi
    for (int j = 0; j < d; ++j) {
      out[o++] = std::sin(f * x[j]);
      out[o++] = std::cos(f * x[j]);
    }
  }
  return out;
}

MatX FrequencyEncoding::jacobian(const VecX& x) const {
  const int d = static_cast<int>(x.size());
  MatX J = MatX::Zero(output_dim(d), d);
  Eigen::Index o = 0;
  if (append_raw_) {
    for (int j = 0; j < d; ++j) J(j, j) = 1.0;
    o = d;
  }
  for (int k = 0; k < num_bands_; ++k) {
    const real f = std::ldexp(kPi, k);
    for (int j = 0; j < d; ++j) {
      J(o++, j) = f * std::cos(f * x[j]);
      J(o++, j) = -f * std::sin(f * x[j]);
    }
  }
  return J;
}

void FrequencyEncoding::backward(const VecX& x, const VecX& dout, VecX& dx) const {
  const int d = static_cast<int>(x.size());
  Eigen::Index o = 0;
  if (append_raw_) {
    dx += dout.head(d);
    o = d;
  }
  for (int k = 0; k < num_bands_; ++k) {
    const real f = std::ldexp(kPi, k);
    for (int j = 0; j < d; ++j) {
      dx[j] += dout[o++] * f * std::cos(f * x[j]);
      dx[j] -= dout[o++] * f * std::sin(f * x[j]);
    }
  }
}

std::vector<int> grid_resolutions(int r_min, int r_max, int levels) {
  if (levels < 2) throw DomainError("grid_resolutions: need at least 2 levels");
  if (r_min < 1 || r_min > r_max) throw DomainError("grid_resolutions: need 1 <= R_min <= R_max");
  const real b = std::exp((std::log(static_cast<real>(r_max)) -
                           std::log(static_cast<real>(r_min))) /
                          static_cast<real>(levels - 1));
  std::vector<int> res(levels);
  for (int l = 0; l < levels; ++l) {
    // The 1e-9 guard only absorbs last-ulp error in exp/log; exact integer
    // products like R_min * b^(L-1) = R_max land on their true value.
    res[l] = static_cast<int>(std::floor(r_min * std::pow(b, l) + 1e-9));
  }
  return res;
}

FeatureGrid::FeatureGrid(int r_min, int r_max, int levels, int feature_dim, Rng& rng,
                         real init_scale)
    : res_(grid_resolutions(r_min, r_max, levels)), feature_dim_(feature_dim) {
  Eigen::Index total = 0;
  offsets_.reserve(res_.size());
  for (int r : res_) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(r) * r * r * feature_dim_;
  }
  data_ = VecX::Zero(total);
  std::normal_distribution<real> gauss(0.0, init_scale);
  for (Eigen::Index i = 0; i < total; ++i) data_[i] = gauss(rng);
}

VecX FeatureGrid::encode(const Vec3& x, Cache* cache) const {
  Vec3 p;
  bool clamped[3];
  for (int j = 0; j < 3; ++j) {
    p[j] = clamp01(x[j]);
    clamped[j] = p[j] != x[j];
  }
  VecX out(output_dim());
  if (cache) cache->levels.resize(res_.size());
  for (std::size_t l = 0; l < res_.size(); ++l) {
    const int r = res_[l];
    const real scale = static_cast<real>(r - 1);
    int idx[3];
    real frac[3];
    for (int j = 0; j < 3; ++j) {
      const real u = p[j] * scale;
      idx[j] = std::min(static_cast<int>(u), std::max(r - 2, 0));
      frac[j] = r > 1 ? u - idx[j] : 0.0;
    }
    Cache::Level lv;
    int c = 0;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx, ++c) {
          const int ix = std::min(idx[0] + dx, r - 1);
          const int iy = std::min(idx[1] + dy, r - 1);
          const int iz = std::min(idx[2] + dz, r - 1);
          const real wx = dx ? frac[0] : 1.0 - frac[0];
          const real wy = dy ? frac[1] : 1.0 - frac[1];
          const real wz = dz ? frac[2] : 1.0 - frac[2];
          lv.corner[c] = offsets_[l] +
                         (static_cast<Eigen::Index>(iz) * r * r + static_cast<Eigen::Index>(iy) * r + ix) *
                             feature_dim_;
          lv.weight[c] = wx * wy * wz;
          const real sx = (dx ? 1.0 : -1.0) * wy * wz * scale;
          const real sy = (dy ? 1.0 : -1.0) * wx * wz * scale;
          const real sz = (dz ? 1.0 : -1.0) * wx * wy * scale;
          lv.dweight[c] = Vec3(sx, sy, sz);
        }
    for (int j = 0; j < 3; ++j) lv.clamped[j] = clamped[j];
    VecX f = VecX::Zero(feature_dim_);
    for (c = 0; c < 8; ++c)
      f += lv.weight[c] * data_.segment(lv.corner[c], feature_dim_);
    if (!all_finite(f)) throw DomainError("grid_encode: NaN feature");
    out.segment(static_cast<Eigen::Index>(l) * feature_dim_, feature_dim_) = f;
    if (cache) (*cache).levels[l] = lv;
  }
  return out;
}

void FeatureGrid::backward(const Cache& cache, const VecX& dout, Vec3* dx, VecX* gfeat) const {
  for (std::size_t l = 0; l < cache.levels.size(); ++l) {
    const auto& lv = cache.levels[l];
    const auto dseg = dout.segment(static_cast<Eigen::Index>(l) * feature_dim_, feature_dim_);
    for (int c = 0; c < 8; ++c) {
      const auto feat = data_.segment(lv.corner[c], feature_dim_);
      if (gfeat) gfeat->segment(lv.corner[c], feature_dim_) += lv.weight[c] * dseg;
      if (dx) {
        const real s = dseg.dot(feat);
        for (int j = 0; j < 3; ++j)
          if (!lv.clamped[j]) (*dx)[j] += s * lv.dweight[c][j];
      }
    }
  }
}

void FeatureGrid::backward_sparse(const Cache& cache, const VecX& dout, Vec3* dx,
                                  std::vector<std::pair<Eigen::Index, real>>* gfeat) const {
  for (std::size_t l = 0; l < cache.levels.size(); ++l) {
    const auto& lv = cache.levels[l];
    const auto dseg = dout.segment(static_cast<Eigen::Index>(l) * feature_dim_, feature_dim_);
    for (int c = 0; c < 8; ++c) {
      const auto feat = data_.segment(lv.corner[c], feature_dim_);
      if (gfeat)
        for (int k = 0; k < feature_dim_; ++k)
          gfeat->emplace_back(lv.corner[c] + k, lv.weight[c] * dseg[k]);
      if (dx) {
        const real s = dseg.dot(feat);
        for (int j = 0; j < 3; ++j)
          if (!lv.clamped[j]) (*dx)[j] += s * lv.dweight[c][j];
      }
    }
  }
}

int sh_coeff_count(int max_degree) { return (max_degree + 1) * (max_degree + 1); }

void sh_eval(const Vec3& dir, int max_degree, real* out) {
  const real x = dir.x(), y = dir.y(), z = dir.z();
  const real x2 = x * x, y2 = y * y, z2 = z * z;
  int i = 0;
  out[i++] = 0.28209479177387814;
  if (max_degree >= 1) {
    out[i++] = -0.48860251190291987 * y;
    out[i++] = 0.48860251190291987 * z;
    out[i++] = -0.48860251190291987 * x;
  }
  if (max_degree >= 2) {
    out[i++] = 1.0925484305920792 * x * y;
    out[i++] = -1.0925484305920792 * y * z;
    out[i++] = 0.31539156525252005 * (3.0 * z2 - 1.0);
    out[i++] = -1.0925484305920792 * x * z;
    out[i++] = 0.5462742152960396 * (x2 - y2);
  }
  if (max_degree >= 3) {
    out[i++] = -0.5900435899266435 * y * (3.0 * x2 - y2);
    out[i++] = 2.890611442640554 * x * y * z;
    out[i++] = -0.4570457994644658 * y * (5.0 * z2 - 1.0);
    out[i++] = 0.3731763325901154 * z * (5.0 * z2 - 3.0);
    out[i++] = -0.4570457994644658 * x * (5.0 * z2 - 1.0);
    out[i++] = 1.445305721320277 * z * (x2 - y2);
    out[i++] = -0.5900435899266435 * x * (x2 - 3.0 * y2);
  }
  if (max_degree >= 4) {
    out[i++] = 2.5033429417967046 * x * y * (x2 - y2);
    out[i++] = -1.7701307697799304 * y * z * (3.0 * x2 - y2);
    out[i++] = 0.9461746957575601 * x * y * (7.0 * z2 - 1.0);
    out[i++] = -0.6690465435572892 * y * z * (7.0 * z2 - 3.0);
    out[i++] = 0.10578554691520431 * (35.0 * z2 * z2 - 30.0 * z2 + 3.0);
    out[i++] = -0.6690465435572892 * x * z * (7.0 * z2 - 3.0);
    out[i++] = 0.47308734787878004 * (x2 - y2) * (7.0 * z2 - 1.0);
    out[i++] = -1.7701307697799304 * x * z * (x2 - 3.0 * y2);
    out[i++] = 0.6258357354491761 * (x2 * (x2 - 3.0 * y2) - y2 * (3.0 * x2 - y2));
  }
  if (max_degree > 4) throw DomainError("sh_eval: max_degree > 4 unsupported");
}

VecX IdeEncoding::encode(const Vec3& dir, real kappa) const {
  if (kappa <= 0.0) throw DomainError("ide_encode: kappa must be positive");
  if (std::abs(dir.norm() - 1.0) > 1e-6) throw DomainError("ide_encode: dir must be unit");
  VecX out(output_dim());
  sh_eval(dir, max_degree_, out.data());
  int i = 0;
  for (int l = 0; l <= max_degree_; ++l) {
    const real att = std::exp(-static_cast<real>(l * (l + 1)) / (2.0 * kappa));
    for (int m = -l; m <= l; ++m) out[i++] *= att;
  }
  return out;
}

VecX IdeEncoding::encode_with_rho_grad(const Vec3& dir, real rho, VecX* d_drho) const {
  if (rho <= 0.0) throw DomainError("ide_encode: rho must be positive");
  VecX out(output_dim());
  sh_eval(dir, max_degree_, out.data());
  if (d_drho) d_drho->resize(output_dim());
  int i = 0;
  for (int l = 0; l <= max_degree_; ++l) {
    const real half_ll1 = 0.5 * static_cast<real>(l * (l + 1));
    const real att = std::exp(-half_ll1 * rho);  // kappa = 1/rho
    for (int m = -l; m <= l; ++m, ++i) {
      out[i] *= att;
      if (d_drho) (*d_drho)[i] = -half_ll1 * out[i];
    }
  }
  return out;
}

}  // namespace facade
