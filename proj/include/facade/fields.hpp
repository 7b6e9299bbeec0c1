#pragma once

#include <vector>

#include "facade/encodings.hpp"
#include "facade/mlp.hpp"
#include "facade/sdf.hpp"

namespace facade {

// Laplace-CDF transform from signed distance to volume density.
real sdf_to_density(real s, real beta);
// Partial derivatives of the transform.
void sdf_to_density_grad(real s, real beta, real* dsigma_ds, real* dsigma_dbeta);

// Mirror view direction d (camera -> point) about unit normal n.
inline Vec3 reflect(const Vec3& d, const Vec3& n) { return d - 2.0 * d.dot(n) * n; }

// c = c_d + q ⊙ c_s (raw value; clamping for display happens at export).
inline Vec3 compose_color(const Vec3& c_d, const Vec3& c_s, const Vec3& q) {
  return c_d + q.cwiseProduct(c_s);
}

struct GeometryOutput {
  real s = 0.0;
  VecX z;
  real rho = 0.0;  // exp-mapped, always positive
  Vec3 q;          // sigmoid-mapped, componentwise in [0,1]
};

struct MaterialOutput {
  Vec3 albedo;
  real roughness = 0.0;
  real metallic = 0.0;
};

struct GeometryConfig {
  int freq_bands = 6;
  int grid_levels = 6;
  int grid_r_min = 16;
  int grid_r_max = 64;
  int grid_feature_dim = 2;
  int z_dim = 15;
  int hidden = 64;
  int hidden_layers = 2;
};

// Geometry field F_g: (s, z, rho, q) from frequency encoding + grid features.
class GeometryField : public SdfField {
 public:
  GeometryField() = default;
  GeometryField(const GeometryConfig& cfg, Rng& rng);

  struct Cache {
    Vec3 x;
    VecX input;
    FeatureGrid::Cache grid;
    Mlp::Workspace ws;
    VecX raw;  // raw network output
  };

  GeometryOutput eval(const Vec3& x, Cache* cache = nullptr) const;

  // Accumulates gradients of the seeded outputs into the flat network /
  // feature gradients and optionally into dx. dz may be empty.
  void backward(const Cache& cache, real ds, const VecX& dz, real drho, const Vec3& dq,
                Vec3* dx, VecX* gtheta, VecX* gfeat) const;

  real sdf(const Vec3& x) const override;
  // Analytic route: full reverse pass seeded on s.
  Vec3 sdf_grad(const Vec3& x) const override;

  // Short fit of s(x) towards ||x|| - radius so the field starts as a sphere.
  void sphere_init(real radius, int steps, Rng& rng);

  const GeometryConfig& config() const { return cfg_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  FeatureGrid& grid() { return grid_; }
  const FeatureGrid& grid() const { return grid_; }

 private:
  GeometryConfig cfg_;
  FrequencyEncoding freq_{6};
  FeatureGrid grid_;
  Mlp net_;
};

struct HeadConfig {
  int freq_bands = 4;
  int hidden = 64;
  int hidden_layers = 2;
};

// Diffuse color field F_d(x, z) -> RGB in [0,1]^3.
class DiffuseField {
 public:
  DiffuseField() = default;
  DiffuseField(const HeadConfig& cfg, int z_dim, Rng& rng);

  struct Cache {
    Vec3 x;
    VecX raw;
    Mlp::Workspace ws;
  };

  Vec3 eval(const Vec3& x, const VecX& z, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Vec3& drgb, VecX* dz, VecX* gtheta) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  int z_dim() const { return z_dim_; }

 private:
  FrequencyEncoding freq_{4};
  Mlp net_;
  int z_dim_ = 0;
};

// Specular color field F_s(x, z, rho, IDE(w_r, 1/rho), n·d, q) -> RGB.
// The reflection direction and normal are treated as constants in the
// backward pass (detached-normal convention).
class SpecularField {
 public:
  SpecularField() = default;
  SpecularField(const HeadConfig& cfg, int z_dim, int ide_degree, Rng& rng);

  struct Cache {
    VecX raw;
    VecX ide_drho;
    Mlp::Workspace ws;
    Eigen::Index z_off = 0, rho_off = 0, ide_off = 0, nd_off = 0, q_off = 0;
  };

  Vec3 eval(const Vec3& x, const VecX& z, real rho, const Vec3& view_dir,
            const Vec3& normal, const Vec3& q, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Vec3& drgb, VecX* dz, real* drho, Vec3* dq,
                VecX* gtheta) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

 private:
  FrequencyEncoding freq_{4};
  IdeEncoding ide_{4};
  Mlp net_;
  int z_dim_ = 0;
};

// Material field F_r(x, z) -> (albedo, roughness, metallic), all in [0,1].
class MaterialField {
 public:
  MaterialField() = default;
  MaterialField(const HeadConfig& cfg, int z_dim, Rng& rng);

  struct Cache {
    VecX raw;
    Mlp::Workspace ws;
  };

  MaterialOutput eval(const Vec3& x, const VecX& z, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Vec3& dalbedo, real drough, real dmetal,
                VecX* dz, VecX* gtheta) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

 private:
  FrequencyEncoding freq_{4};
  Mlp net_;
  int z_dim_ = 0;
};

// Background field over inverted-sphere coordinates (x', y', z', 1/r):
// density via softplus, color via sigmoid.
class BackgroundField {
 public:
  BackgroundField() = default;
  BackgroundField(int freq_bands, int hidden, int hidden_layers, Rng& rng);

  struct Cache {
    Vec4 p;
    VecX raw;
    Mlp::Workspace ws;
  };

  void eval(const Vec4& p, real* sigma, Vec3* rgb, Cache* cache = nullptr) const;
  void backward(const Cache& cache, real dsigma, const Vec3& drgb, VecX* gtheta) const;

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

 private:
  FrequencyEncoding freq_{4};
  Mlp net_;
};

}  // namespace facade
