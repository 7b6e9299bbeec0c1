#pragma once

#include <vector>

#include "facade/math.hpp"

namespace facade {

// Sinusoidal encoding sin(2^k pi x), cos(2^k pi x) for k = 0..num_bands-1,
// optionally with the raw input appended in front.
class FrequencyEncoding {
 public:
  FrequencyEncoding(int num_bands, bool append_raw = true)
      : num_bands_(num_bands), append_raw_(append_raw) {
    if (num_bands < 0) throw DomainError("FrequencyEncoding: num_bands < 0");
  }

  int num_bands() const { return num_bands_; }
  bool append_raw() const { return append_raw_; }

  int output_dim(int input_dim) const {
    return input_dim * 2 * num_bands_ + (append_raw_ ? input_dim : 0);
  }

  VecX encode(const VecX& x) const;

  // d(encode)/d(x_j) is nonzero only for components derived from x_j;
  // returns the full Jacobian (output_dim x input_dim).
  MatX jacobian(const VecX& x) const;

  // Chain rule helper: accumulates J^T * dout into dx.
  void backward(const VecX& x, const VecX& dout, VecX& dx) const;

 private:
  int num_bands_;
  bool append_raw_;
};

// Resolutions R_l = floor(R_min * b^l), b = exp((ln R_max - ln R_min)/(L-1)).
std::vector<int> grid_resolutions(int r_min, int r_max, int levels);

// Dense multi-resolution feature grid over [0,1]^3 with trilinear
// interpolation. Feature vectors of all levels are concatenated.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(int r_min, int r_max, int levels, int feature_dim, Rng& rng,
              real init_scale = 1e-2);

  int levels() const { return static_cast<int>(res_.size()); }
  int feature_dim() const { return feature_dim_; }
  int output_dim() const { return levels() * feature_dim_; }
  const std::vector<int>& resolutions() const { return res_; }

  VecX& features() { return data_; }
  const VecX& features() const { return data_; }
  Eigen::Index level_offset(int level) const { return offsets_[level]; }

  struct Cache {
    // Per level: the 8 corner feature offsets and trilinear weights, plus the
    // weight derivatives w.r.t. the (clamped) query point.
    struct Level {
      Eigen::Index corner[8];
      real weight[8];
      Vec3 dweight[8];
      bool clamped[3];
    };
    std::vector<Level> levels;
  };

  VecX encode(const Vec3& x, Cache* cache = nullptr) const;

  // Accumulates feature gradients into gfeat (same size as features()) and the
  // query-point gradient into dx. Components clamped at the cube boundary get
  // zero positional gradient.
  void backward(const Cache& cache, const VecX& dout, Vec3* dx, VecX* gfeat) const;

  // Sparse variant of the feature gradient for accumulation outside a dense
  // buffer: appends (index, value) pairs.
  void backward_sparse(const Cache& cache, const VecX& dout, Vec3* dx,
                       std::vector<std::pair<Eigen::Index, real>>* gfeat) const;

 private:
  std::vector<int> res_;
  std::vector<Eigen::Index> offsets_;
  int feature_dim_ = 0;
  VecX data_;
};

// Real spherical harmonics up to degree 4 evaluated at a unit direction.
// Coefficients are ordered (l, m) with m = -l..l, 25 values for max_degree 4.
int sh_coeff_count(int max_degree);
void sh_eval(const Vec3& dir, int max_degree, real* out);

// Integrated directional encoding: SH coefficients of the reflection
// direction attenuated per band by exp(-l(l+1)/(2 kappa)).
class IdeEncoding {
 public:
  explicit IdeEncoding(int max_degree = 4) : max_degree_(max_degree) {}

  int max_degree() const { return max_degree_; }
  int output_dim() const { return sh_coeff_count(max_degree_); }

  VecX encode(const Vec3& dir, real kappa) const;

  // Derivative of each output w.r.t. roughness rho where kappa = 1/rho:
  // attenuation exp(-l(l+1) rho / 2), so d/drho = -l(l+1)/2 * value.
  VecX encode_with_rho_grad(const Vec3& dir, real rho, VecX* d_drho) const;

 private:
  int max_degree_;
};

}  // namespace facade
