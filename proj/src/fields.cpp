#include "facade/fields.hpp"

#include "facade/params.hpp"

namespace facade {

real sdf_to_density(real s, real beta) {
  if (beta <= 0.0) throw DomainError("sdf_to_density: beta must be positive");
  if (s < 0.0) return (1.0 / beta) * (1.0 - 0.5 * std::exp(s / beta));
  return (0.5 / beta) * std::exp(-s / beta);
}

void sdf_to_density_grad(real s, real beta, real* dsigma_ds, real* dsigma_dbeta) {
  if (beta <= 0.0) throw DomainError("sdf_to_density: beta must be positive");
  const real b2 = beta * beta;
  if (s < 0.0) {
    const real e = std::exp(s / beta);
    if (dsigma_ds) *dsigma_ds = -0.5 * e / b2;
    if (dsigma_dbeta) *dsigma_dbeta = -1.0 / b2 + 0.5 * e / b2 + 0.5 * e * s / (b2 * beta);
  } else {
    const real e = std::exp(-s / beta);
    if (dsigma_ds) *dsigma_ds = -0.5 * e / b2;
    if (dsigma_dbeta) *dsigma_dbeta = -0.5 * e / b2 + 0.5 * e * s / (b2 * beta);
  }
}

GeometryField::GeometryField(const GeometryConfig& cfg, Rng& rng)
    : cfg_(cfg),
      freq_(cfg.freq_bands),
      grid_(cfg.grid_r_min, cfg.grid_r_max, cfg.grid_levels, cfg.grid_feature_dim, rng) {
  const int in = freq_.output_dim(3) + grid_.output_dim();
  std::vector<int> dims{in};
  for (int l = 0; l < cfg.hidden_layers; ++l) dims.push_back(cfg.hidden);
  dims.push_back(1 + cfg.z_dim + 1 + 3);  // s, z, raw_rho, raw_q
  net_ = Mlp(dims, rng);
}

GeometryOutput GeometryField::eval(const Vec3& x, Cache* cache) const {
  if (!x.allFinite()) throw DomainError("geometry_eval: non-finite input");
  Cache local;
  Cache& c = cache ? *cache : local;
  c.x = x;
  const VecX fx = freq_.encode(x);
  // The grid spans [0,1]^3; scene coordinates live in [-1,1]^3.
  const VecX gx = grid_.encode(0.5 * (x + Vec3::Ones()), &c.grid);
  c.input.resize(fx.size() + gx.size());
  c.input << fx, gx;
  c.raw = net_.forward(c.input, c.ws);
  GeometryOutput out;
  out.s = c.raw[0];
  out.z = c.raw.segment(1, cfg_.z_dim);
  out.rho = std::exp(std::clamp(c.raw[1 + cfg_.z_dim], -10.0, 10.0));
  for (int j = 0; j < 3; ++j) out.q[j] = sigmoid(c.raw[2 + cfg_.z_dim + j]);
  return out;
}

void GeometryField::backward(const Cache& cache, real ds, const VecX& dz, real drho,
                             const Vec3& dq, Vec3* dx, VecX* gtheta, VecX* gfeat) const {
  VecX dout = VecX::Zero(cache.raw.size());
  dout[0] = ds;
  if (dz.size() > 0) dout.segment(1, cfg_.z_dim) = dz;
  const real raw_rho = cache.raw[1 + cfg_.z_dim];
  if (raw_rho > -10.0 && raw_rho < 10.0) dout[1 + cfg_.z_dim] = drho * std::exp(raw_rho);
  for (int j = 0; j < 3; ++j) {
    const real sq = sigmoid(cache.raw[2 + cfg_.z_dim + j]);
    dout[2 + cfg_.z_dim + j] = dq[j] * sq * (1.0 - sq);
  }
  VecX din;
  net_.backward(cache.ws, dout, (dx || gfeat) ? &din : nullptr, gtheta);
  if (dx || gfeat) {
    const Eigen::Index nf = freq_.output_dim(3);
    if (dx) {
      VecX dxv = VecX::Zero(3);
      freq_.backward(VecX(cache.x), din.head(nf), dxv);
      Vec3 dgrid = Vec3::Zero();
      grid_.backward(cache.grid, din.tail(din.size() - nf), &dgrid, nullptr);
      *dx += Vec3(dxv) + 0.5 * dgrid;  // chain through the [0,1]^3 remap
    }
    if (gfeat) grid_.backward(cache.grid, din.tail(din.size() - nf), nullptr, gfeat);
  }
}

real GeometryField::sdf(const Vec3& x) const { return eval(x).s; }

Vec3 GeometryField::sdf_grad(const Vec3& x) const {
  Cache c;
  eval(x, &c);
  Vec3 dx = Vec3::Zero();
  backward(c, 1.0, VecX(), 0.0, Vec3::Zero(), &dx, nullptr, nullptr);
  return dx;
}

void GeometryField::sphere_init(real radius, int steps, Rng& rng) {
  VecX gtheta = VecX::Zero(net_.theta().size());
  VecX gfeat = VecX::Zero(grid_.features().size());
  std::vector<ParamGroup> groups;
  groups.emplace_back("geometry.net", &net_.theta());
  groups.emplace_back("geometry.grid", &grid_.features());
  Adam opt(AdamConfig{.lr = 1e-2});
  const int batch = 256;
  for (int it = 0; it < steps; ++it) {
    for (auto& g : groups) g.zero_grad();
    for (int i = 0; i < batch; ++i) {
      Vec3 x;
      for (int j = 0; j < 3; ++j) x[j] = uniform(rng, -1.0, 1.0);
      const real target = x.norm() - radius;
      Cache c;
      const GeometryOutput o = eval(x, &c);
      const real ds = 2.0 * (o.s - target) / batch;
      backward(c, ds, VecX(), 0.0, Vec3::Zero(), nullptr, &groups[0].grad,
               &groups[1].grad);
    }
    opt.step(groups);
  }
}

DiffuseField::DiffuseField(const HeadConfig& cfg, int z_dim, Rng& rng)
    : freq_(cfg.freq_bands), z_dim_(z_dim) {
  std::vector<int> dims{freq_.output_dim(3) + z_dim};
  for (int l = 0; l < cfg.hidden_layers; ++l) dims.push_back(cfg.hidden);
  dims.push_back(3);
  net_ = Mlp(dims, rng);
}

Vec3 DiffuseField::eval(const Vec3& x, const VecX& z, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.x = x;
  const VecX fx = freq_.encode(x);
  VecX in(fx.size() + z.size());
  in << fx, z;
  c.raw = net_.forward(in, c.ws);
  return {sigmoid(c.raw[0]), sigmoid(c.raw[1]), sigmoid(c.raw[2])};
}

void DiffuseField::backward(const Cache& cache, const Vec3& drgb, VecX* dz,
                            VecX* gtheta) const {
  VecX dout(3);
  for (int j = 0; j < 3; ++j) {
    const real s = sigmoid(cache.raw[j]);
    dout[j] = drgb[j] * s * (1.0 - s);
  }
  VecX din;
  net_.backward(cache.ws, dout, dz ? &din : nullptr, gtheta);
  if (dz) *dz += din.tail(z_dim_);
}

SpecularField::SpecularField(const HeadConfig& cfg, int z_dim, int ide_degree, Rng& rng)
    : freq_(cfg.freq_bands), ide_(ide_degree), z_dim_(z_dim) {
  const int in = freq_.output_dim(3) + z_dim + 1 + ide_.output_dim() + 1 + 3;
  std::vector<int> dims{in};
  for (int l = 0; l < cfg.hidden_layers; ++l) dims.push_back(cfg.hidden);
  dims.push_back(3);
  net_ = Mlp(dims, rng);
}

Vec3 SpecularField::eval(const Vec3& x, const VecX& z, real rho, const Vec3& view_dir,
                         const Vec3& normal, const Vec3& q, Cache* cache) const {
  if (rho <= 0.0) throw DomainError("specular_eval: rho must be positive");
  Cache local;
  Cache& c = cache ? *cache : local;
  const VecX fx = freq_.encode(x);
  const Vec3 wr = reflect(view_dir, normal).normalized();
  const VecX ide = ide_.encode_with_rho_grad(wr, rho, &c.ide_drho);
  VecX in(fx.size() + z.size() + 1 + ide.size() + 1 + 3);
  c.z_off = fx.size();
  c.rho_off = c.z_off + z.size();
  c.ide_off = c.rho_off + 1;
  c.nd_off = c.ide_off + ide.size();
  c.q_off = c.nd_off + 1;
  in << fx, z, VecX::Constant(1, rho), ide, VecX::Constant(1, normal.dot(view_dir)), q;
  c.raw = net_.forward(in, c.ws);
  return {sigmoid(c.raw[0]), sigmoid(c.raw[1]), sigmoid(c.raw[2])};
}

void SpecularField::backward(const Cache& cache, const Vec3& drgb, VecX* dz, real* drho,
                             Vec3* dq, VecX* gtheta) const {
  VecX dout(3);
  for (int j = 0; j < 3; ++j) {
    const real s = sigmoid(cache.raw[j]);
    dout[j] = drgb[j] * s * (1.0 - s);
  }
  VecX din;
  const bool need_in = dz || drho || dq;
  net_.backward(cache.ws, dout, need_in ? &din : nullptr, gtheta);
  if (dz) *dz += din.segment(cache.z_off, z_dim_);
  if (drho) {
    *drho += din[cache.rho_off];
    *drho += din.segment(cache.ide_off, cache.ide_drho.size()).dot(cache.ide_drho);
  }
  if (dq) *dq += Vec3(din.segment(cache.q_off, 3));
}

MaterialField::MaterialField(const HeadConfig& cfg, int z_dim, Rng& rng)
    : freq_(cfg.freq_bands), z_dim_(z_dim) {
  std::vector<int> dims{freq_.output_dim(3) + z_dim};
  for (int l = 0; l < cfg.hidden_layers; ++l) dims.push_back(cfg.hidden);
  dims.push_back(5);
  net_ = Mlp(dims, rng);
}

MaterialOutput MaterialField::eval(const Vec3& x, const VecX& z, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  const VecX fx = freq_.encode(x);
  VecX in(fx.size() + z.size());
  in << fx, z;
  c.raw = net_.forward(in, c.ws);
  MaterialOutput out;
  for (int j = 0; j < 3; ++j) out.albedo[j] = sigmoid(c.raw[j]);
  out.roughness = sigmoid(c.raw[3]);
  out.metallic = sigmoid(c.raw[4]);
  return out;
}

void MaterialField::backward(const Cache& cache, const Vec3& dalbedo, real drough,
                             real dmetal, VecX* dz, VecX* gtheta) const {
  VecX dout(5);
  for (int j = 0; j < 3; ++j) {
    const real s = sigmoid(cache.raw[j]);
    dout[j] = dalbedo[j] * s * (1.0 - s);
  }
  const real sr = sigmoid(cache.raw[3]);
  dout[3] = drough * sr * (1.0 - sr);
  const real sm = sigmoid(cache.raw[4]);
  dout[4] = dmetal * sm * (1.0 - sm);
  VecX din;
  net_.backward(cache.ws, dout, dz ? &din : nullptr, gtheta);
  if (dz) *dz += din.tail(z_dim_);
}

BackgroundField::BackgroundField(int freq_bands, int hidden, int hidden_layers, Rng& rng)
    : freq_(freq_bands) {
  std::vector<int> dims{freq_.output_dim(4)};
  for (int l = 0; l < hidden_layers; ++l) dims.push_back(hidden);
  dims.push_back(4);
  net_ = Mlp(dims, rng);
}

void BackgroundField::eval(const Vec4& p, real* sigma, Vec3* rgb, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.p = p;
  c.raw = net_.forward(freq_.encode(VecX(p)), c.ws);
  if (sigma) *sigma = softplus(c.raw[0]);
  if (rgb)
    *rgb = Vec3(sigmoid(c.raw[1]), sigmoid(c.raw[2]), sigmoid(c.raw[3]));
}

void BackgroundField::backward(const Cache& cache, real dsigma, const Vec3& drgb,
                               VecX* gtheta) const {
  VecX dout(4);
  dout[0] = dsigma * softplus_deriv(cache.raw[0]);
  for (int j = 0; j < 3; ++j) {
    const real s = sigmoid(cache.raw[1 + j]);
    dout[1 + j] = drgb[j] * s * (1.0 - s);
  }
  net_.backward(cache.ws, dout, nullptr, gtheta);
}

}  // namespace facade
