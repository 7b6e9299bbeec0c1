#include "facade/brdf.hpp"

namespace facade {

namespace {

constexpr real kGrazingEps = 1e-7;

real luminance(const Vec3& c) { return 0.2126 * c.x() + 0.7152 * c.y() + 0.0722 * c.z(); }

real alpha_of(real roughness) { return std::max(roughness * roughness, 1e-4); }

Vec3 fresnel0(const ShadingPoint& sp) {
  return Vec3::Constant(0.04) * (1.0 - sp.metallic) + sp.albedo * sp.metallic;
}

real smith_g1(real cos_v, real alpha) {
  const real a2 = alpha * alpha;
  const real k = std::sqrt(a2 + (1.0 - a2) * cos_v * cos_v);
  return 2.0 * cos_v / (cos_v + k);
}

// Probability of taking the diffuse branch of the mixture sampler.
real diffuse_prob(const ShadingPoint& sp, const BrdfSampleOptions& opts) {
  if (opts.force_diffuse || opts.diffuse_only) return 1.0;
  if (opts.force_specular) return 0.0;
  const real wd = (1.0 - sp.metallic) * luminance(sp.albedo);
  const real ws = luminance(fresnel0(sp));
  const real sum = wd + ws;
  return sum > 1e-12 ? wd / sum : 0.5;
}

}  // namespace

real ggx_ndf(real n_dot_h, real alpha) {
  if (alpha <= 0.0) throw DomainError("ggx_ndf: alpha must be positive");
  const real a2 = alpha * alpha;
  const real d = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
  return a2 / (kPi * d * d);
}

Vec3 brdf_eval(const ShadingPoint& sp, const Vec3& omega_i, bool* clamped,
               const BrdfSampleOptions& opts) {
  const real cosi = sp.normal.dot(omega_i);
  const real coso = sp.normal.dot(sp.omega_o);
  if (clamped) *clamped = false;
  if (cosi <= 0.0 || coso <= 0.0) return Vec3::Zero();
  const Vec3 diffuse = (1.0 - sp.metallic) * sp.albedo / kPi;
  if (opts.diffuse_only) return diffuse;
  const Vec3 h = (omega_i + sp.omega_o).normalized();
  const real coshn = std::clamp(sp.normal.dot(h), 0.0, 1.0);
  const real cosoh = std::clamp(sp.omega_o.dot(h), 0.0, 1.0);
  const real alpha = alpha_of(sp.roughness);
  const real D = ggx_ndf(coshn, alpha);
  const real G = smith_g1(cosi, alpha) * smith_g1(coso, alpha);
  const real t = std::pow(1.0 - cosoh, 5.0);
  const Vec3 F = fresnel0(sp) * (1.0 - t) + Vec3::Constant(t);
  real denom = 4.0 * cosi * coso;
  if (denom < kGrazingEps) {
    denom = kGrazingEps;
    if (clamped) *clamped = true;
  }
  return diffuse + F * (D * G / denom);
}

void brdf_eval_backward(const ShadingPoint& sp, const Vec3& omega_i, const Vec3& dout,
                        Vec3* d_albedo, real* d_roughness, real* d_metallic,
                        const BrdfSampleOptions& opts) {
  const real cosi = sp.normal.dot(omega_i);
  const real coso = sp.normal.dot(sp.omega_o);
  if (cosi <= 0.0 || coso <= 0.0) return;
  if (opts.diffuse_only) {
    if (d_albedo)
      for (int c = 0; c < 3; ++c) (*d_albedo)[c] += dout[c] * (1.0 - sp.metallic) / kPi;
    if (d_metallic)
      for (int c = 0; c < 3; ++c) *d_metallic += dout[c] * (-sp.albedo[c] / kPi);
    return;
  }
  const Vec3 h = (omega_i + sp.omega_o).normalized();
  const real coshn = std::clamp(sp.normal.dot(h), 0.0, 1.0);
  const real cosoh = std::clamp(sp.omega_o.dot(h), 0.0, 1.0);
  const real alpha = alpha_of(sp.roughness);
  const real a2 = alpha * alpha;
  const real D = ggx_ndf(coshn, alpha);
  const real g1i = smith_g1(cosi, alpha), g1o = smith_g1(coso, alpha);
  const real G = g1i * g1o;
  const real t = std::pow(1.0 - cosoh, 5.0);
  const Vec3 F0 = fresnel0(sp);
  const Vec3 F = F0 * (1.0 - t) + Vec3::Constant(t);
  const real denom = std::max(4.0 * cosi * coso, kGrazingEps);
  const real spec_scalar = D * G / denom;

  if (d_albedo) {
    // Diffuse path plus the Fresnel F0 path.
    for (int c = 0; c < 3; ++c)
      (*d_albedo)[c] += dout[c] * ((1.0 - sp.metallic) / kPi +
                                   sp.metallic * (1.0 - t) * spec_scalar);
  }
  if (d_metallic) {
    real dm = 0.0;
    for (int c = 0; c < 3; ++c) {
      dm += dout[c] * (-sp.albedo[c] / kPi);
      dm += dout[c] * (sp.albedo[c] - 0.04) * (1.0 - t) * spec_scalar;
    }
    *d_metallic += dm;
  }
  if (d_roughness && alpha > 1e-4) {
    // d(D G)/d(alpha), then alpha = R^2.
    const real d = coshn * coshn * (a2 - 1.0) + 1.0;
    const real dD_dalpha = 2.0 * alpha / (kPi * d * d) -
                           4.0 * a2 * alpha * coshn * coshn / (kPi * d * d * d);
    auto dg1_dalpha = [&](real cv) {
      const real k = std::sqrt(a2 + (1.0 - a2) * cv * cv);
      const real dk = alpha * (1.0 - cv * cv) / k;
      return -2.0 * cv * dk / ((cv + k) * (cv + k));
    };
    const real dG_dalpha = dg1_dalpha(cosi) * g1o + g1i * dg1_dalpha(coso);
    const real dspec_dalpha = (dD_dalpha * G + D * dG_dalpha) / denom;
    const real dalpha_dR = 2.0 * sp.roughness;
    real dr = 0.0;
    for (int c = 0; c < 3; ++c) dr += dout[c] * F[c] * dspec_dalpha * dalpha_dR;
    *d_roughness += dr;
  }
}

real brdf_pdf(const ShadingPoint& sp, const Vec3& omega_i, const BrdfSampleOptions& opts) {
  const real cosi = sp.normal.dot(omega_i);
  if (cosi <= 0.0) return 0.0;
  const real pd = diffuse_prob(sp, opts);
  const real pdf_diffuse = cosi / kPi;
  real pdf_spec = 0.0;
  if (pd < 1.0) {
    const Vec3 h = (omega_i + sp.omega_o).normalized();
    const real coshn = sp.normal.dot(h);
    const real cosoh = sp.omega_o.dot(h);
    if (coshn > 0.0 && cosoh > 1e-9) {
      const real D = ggx_ndf(coshn, alpha_of(sp.roughness));
      pdf_spec = D * coshn / (4.0 * cosoh);
    }
  }
  return pd * pdf_diffuse + (1.0 - pd) * pdf_spec;
}

BrdfSample sample_brdf(const ShadingPoint& sp, Rng& rng, const BrdfSampleOptions& opts) {
  const real pd = diffuse_prob(sp, opts);
  Vec3 t, b;
  build_frame(sp.normal, t, b);
  BrdfSample out;
  for (int attempt = 0; attempt < 8; ++attempt) {
    const bool diffuse = uniform(rng) < pd;
    Vec3 wi;
    if (diffuse) {
      const real u1 = uniform(rng), u2 = uniform(rng);
      const real r = std::sqrt(u1);
      const real phi = 2.0 * kPi * u2;
      const real z = std::sqrt(std::max(0.0, 1.0 - u1));
      wi = r * std::cos(phi) * t + r * std::sin(phi) * b + z * sp.normal;
    } else {
      const real u1 = uniform(rng), u2 = uniform(rng);
      const real alpha = alpha_of(sp.roughness);
      const real phi = 2.0 * kPi * u1;
      const real cos_th = std::sqrt((1.0 - u2) / (1.0 + (alpha * alpha - 1.0) * u2));
      const real sin_th = std::sqrt(std::max(0.0, 1.0 - cos_th * cos_th));
      const Vec3 h = sin_th * std::cos(phi) * t + sin_th * std::sin(phi) * b +
                     cos_th * sp.normal;
      wi = 2.0 * sp.omega_o.dot(h) * h - sp.omega_o;
    }
    if (sp.normal.dot(wi) <= 1e-9) continue;
    out.omega_i = wi.normalized();
    out.half = (out.omega_i + sp.omega_o).normalized();
    out.pdf = brdf_pdf(sp, out.omega_i, opts);
    if (out.pdf <= 0.0) continue;
    out.valid = true;
    return out;
  }
  out.valid = false;
  out.pdf = 0.0;
  return out;
}

namespace {

// Per-sample incident radiance and its factors. V is the clamped grid query.
struct Incident {
  Vec3 radiance = Vec3::Zero();
  Vec3 env = Vec3::Zero();
  Vec3 cached = Vec3::Zero();
  real visibility = 1.0;
};

Incident incident_radiance(const ShadingPoint& sp, const SgMixture& light,
                           const VisibilityGrid* vis, const Vec3& wi,
                           const ShadeOptions& opts) {
  Incident inc;
  inc.env = light.eval(wi);
  inc.visibility = vis ? vis->query(sp.position, wi) : 1.0;
  inc.radiance = inc.visibility * inc.env;
  if (opts.occluded == OccludedMode::CachedRadiance && opts.cached_radiance) {
    inc.cached = opts.cached_radiance(sp.position, wi);
    inc.radiance += (1.0 - inc.visibility) * inc.cached;
  }
  return inc;
}

}  // namespace

ShadeResult shade(const ShadingPoint& sp, const SgMixture& light, const VisibilityGrid* vis,
                  int m, Rng& rng, const ShadeOptions& opts) {
  if (m < 1) throw DomainError("shade: sample count must be >= 1");
  ShadeResult res;
  res.samples.reserve(m);
  real mean_lum = 0.0, m2 = 0.0;
  for (int i = 0; i < m; ++i) {
    const BrdfSample s = sample_brdf(sp, rng, opts.sampling);
    res.samples.push_back(s);
    Vec3 contrib = Vec3::Zero();
    if (s.valid) {
      const real cosi = sp.normal.dot(s.omega_i);
      const Incident inc = incident_radiance(sp, light, vis, s.omega_i, opts);
      const Vec3 f = brdf_eval(sp, s.omega_i, nullptr, opts.sampling);
      contrib = inc.radiance.cwiseProduct(f) * (cosi / s.pdf);
    }
    res.color += contrib;
    const real lum = luminance(contrib);
    const real d1 = lum - mean_lum;
    mean_lum += d1 / (i + 1);
    m2 += d1 * (lum - mean_lum);
  }
  res.color /= static_cast<real>(m);
  res.variance = m > 1 ? m2 / (m - 1) / m : 0.0;  // variance of the mean
  return res;
}

Vec3 shade_with_samples(const ShadingPoint& sp, const SgMixture& light,
                        const VisibilityGrid* vis, const std::vector<BrdfSample>& samples,
                        const ShadeOptions& opts) {
  Vec3 out = Vec3::Zero();
  for (const auto& s : samples) {
    if (!s.valid) continue;
    const real cosi = sp.normal.dot(s.omega_i);
    if (cosi <= 0.0) continue;
    const Incident inc = incident_radiance(sp, light, vis, s.omega_i, opts);
    const Vec3 f = brdf_eval(sp, s.omega_i, nullptr, opts.sampling);
    out += inc.radiance.cwiseProduct(f) * (cosi / s.pdf);
  }
  return out / static_cast<real>(samples.size());
}

void shade_backward(const ShadingPoint& sp, const SgMixture& light, const VisibilityGrid* vis,
                    const std::vector<BrdfSample>& samples, const Vec3& dout,
                    Vec3* d_albedo, real* d_roughness, real* d_metallic, VecX* g_light,
                    VecX* g_vis, const ShadeOptions& opts) {
  const real inv_m = 1.0 / static_cast<real>(samples.size());
  for (const auto& s : samples) {
    if (!s.valid) continue;
    const real cosi = sp.normal.dot(s.omega_i);
    if (cosi <= 0.0) continue;
    const Incident inc = incident_radiance(sp, light, vis, s.omega_i, opts);
    const Vec3 f = brdf_eval(sp, s.omega_i, nullptr, opts.sampling);
    const real scale = inv_m * cosi / s.pdf;
    // d/d f_r
    const Vec3 df = dout.cwiseProduct(inc.radiance) * scale;
    brdf_eval_backward(sp, s.omega_i, df, d_albedo, d_roughness, d_metallic, opts.sampling);
    // d/d Gamma_sg
    if (g_light) {
      const Vec3 denv = dout.cwiseProduct(f) * (scale * inc.visibility);
      light.backward(s.omega_i, denv, *g_light);
    }
    // d/d visibility (cached radiance treated as a constant)
    if (g_vis && vis) {
      Vec3 dLi_dV = inc.env;
      if (opts.occluded == OccludedMode::CachedRadiance && opts.cached_radiance)
        dLi_dV -= inc.cached;
      const real dv = dout.cwiseProduct(f).dot(dLi_dV) * scale;
      vis->query_backward(sp.position, s.omega_i, dv, *g_vis);
    }
  }
}

}  // namespace facade
