#include "facade/brdf.hpp"
#include "facade/renderer.hpp"
#include "facade/trainer.hpp"

namespace facade {

real fd_probe_max_error(const std::function<real()>& loss, VecX& theta, const VecX& grad,
                        int probes, Rng& rng, real step) {
  if (theta.size() == 0) throw DomainError("fd_probe_max_error: empty parameter vector");
  real worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const Eigen::Index i =
        std::uniform_int_distribution<Eigen::Index>(0, theta.size() - 1)(rng);
    const real saved = theta[i];
    theta[i] = saved + step;
    const real lp = loss();
    theta[i] = saved - step;
    const real lm = loss();
    theta[i] = saved;
    const real fd = (lp - lm) / (2.0 * step);
    const real err = std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {

GeometryConfig tiny_geometry() {
  GeometryConfig cfg;
  cfg.freq_bands = 2;
  cfg.grid_levels = 2;
  cfg.grid_r_min = 4;
  cfg.grid_r_max = 8;
  cfg.grid_feature_dim = 2;
  cfg.z_dim = 4;
  cfg.hidden = 16;
  cfg.hidden_layers = 1;
  return cfg;
}

HeadConfig tiny_head() {
  HeadConfig cfg;
  cfg.freq_bands = 2;
  cfg.hidden = 16;
  cfg.hidden_layers = 1;
  return cfg;
}

// Point whose grid coordinates sit away from every cell boundary of every
// level, so positional finite differences stay within one trilinear patch.
Vec3 grid_interior_point(const std::vector<int>& resolutions, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Vec3 x(uniform(rng, -0.9, 0.9), uniform(rng, -0.9, 0.9), uniform(rng, -0.9, 0.9));
    bool ok = true;
    for (const int res : resolutions) {
      if (res < 2) continue;
      for (int j = 0; j < 3; ++j) {
        const real f = 0.5 * (x[j] + 1.0) * (res - 1);
        if (std::abs(f - std::round(f)) < 0.02) ok = false;
      }
    }
    if (ok) return x;
  }
  throw DomainError("grid_interior_point: could not find an interior point");
}

VecX random_unit(int n, Rng& rng) {
  VecX w(n);
  for (int i = 0; i < n; ++i) w[i] = uniform(rng, -1.0, 1.0);
  return w;
}

struct Harness {
  std::vector<GradCheckReport> reports;
  int probes;
  real threshold;
  Rng rng;

  void add(const std::string& name, const std::function<real()>& loss, VecX& theta,
           const VecX& grad, real step = 1e-4) {
    GradCheckReport r;
    r.name = name;
    r.probes = probes;
    if (!grad.allFinite()) {
      r.max_rel_error = std::numeric_limits<real>::infinity();
    } else {
      r.max_rel_error = fd_probe_max_error(loss, theta, grad, probes, rng, step);
    }
    r.ok = r.max_rel_error < threshold;
    reports.push_back(std::move(r));
  }
};

}  // namespace

std::vector<GradCheckReport> run_gradient_checks(std::uint64_t seed, int probes_per_op,
                                                 real threshold) {
  Harness h;
  h.probes = probes_per_op;
  h.threshold = threshold;
  h.rng = Rng(seed);
  Rng init(seed + 1);

  // Plain network.
  {
    Mlp net({5, 16, 3}, init);
    const VecX x = random_unit(5, h.rng);
    const VecX w = random_unit(3, h.rng);
    Mlp::Workspace ws;
    VecX grad = VecX::Zero(net.theta().size());
    net.backward((net.forward(x, ws), ws), w, nullptr, &grad);
    h.add("mlp", [&] {
      Mlp::Workspace lws;
      return w.dot(net.forward(x, lws));
    }, net.theta(), grad);
  }

  // Frequency encoding input gradient.
  {
    const FrequencyEncoding freq(3);
    VecX x = random_unit(3, h.rng);
    const VecX w = random_unit(freq.output_dim(3), h.rng);
    VecX dx = VecX::Zero(3);
    freq.backward(x, w, dx);
    h.add("frequency_encoding", [&] { return w.dot(freq.encode(x)); }, x, dx);
  }

  // Feature grid: feature gradients and the positional gradient.
  {
    FeatureGrid grid(4, 8, 2, 2, init);
    const Vec3 p0 = grid_interior_point({1}, h.rng);  // raw [0,1] query below
    const Vec3 q(0.5 * (p0.x() + 1.0), 0.5 * (p0.y() + 1.0), 0.5 * (p0.z() + 1.0));
    const VecX w = random_unit(grid.output_dim(), h.rng);
    FeatureGrid::Cache cache;
    grid.encode(q, &cache);
    VecX gfeat = VecX::Zero(grid.features().size());
    Vec3 dq = Vec3::Zero();
    grid.backward(cache, w, &dq, &gfeat);
    h.add("feature_grid", [&] { return w.dot(grid.encode(q)); }, grid.features(), gfeat);

    Vec3 qi = grid_interior_point(grid.resolutions(), h.rng);
    Vec3 qq(0.5 * (qi.x() + 1.0), 0.5 * (qi.y() + 1.0), 0.5 * (qi.z() + 1.0));
    FeatureGrid::Cache c2;
    grid.encode(qq, &c2);
    VecX dq2 = VecX::Zero(3);
    Vec3 dq2v = Vec3::Zero();
    grid.backward(c2, w, &dq2v, nullptr);
    dq2 = VecX(dq2v);
    VecX qvec(3);
    qvec << qq.x(), qq.y(), qq.z();
    h.add("feature_grid_input", [&] { return w.dot(grid.encode(Vec3(qvec[0], qvec[1], qvec[2]))); },
          qvec, dq2);
  }

  // Geometry field: parameters, features, and the analytic spatial gradient.
  {
    GeometryField field(tiny_geometry(), init);
    std::vector<Vec3> pts;
    for (int i = 0; i < 5; ++i)
      pts.push_back(Vec3(uniform(h.rng, -0.8, 0.8), uniform(h.rng, -0.8, 0.8),
                         uniform(h.rng, -0.8, 0.8)));
    const VecX wz = random_unit(tiny_geometry().z_dim, h.rng);
    const Vec3 wq(uniform(h.rng, -1.0, 1.0), uniform(h.rng, -1.0, 1.0), uniform(h.rng, -1.0, 1.0));
    const real wr = uniform(h.rng, -1.0, 1.0);
    auto loss = [&] {
      real acc = 0.0;
      for (const auto& p : pts) {
        const GeometryOutput o = field.eval(p);
        acc += o.s + wz.dot(o.z) + wr * o.rho + wq.dot(o.q);
      }
      return acc;
    };
    VecX gnet = VecX::Zero(field.net().theta().size());
    VecX gfeat = VecX::Zero(field.grid().features().size());
    for (const auto& p : pts) {
      GeometryField::Cache c;
      field.eval(p, &c);
      field.backward(c, 1.0, wz, wr, wq, nullptr, &gnet, &gfeat);
    }
    h.add("geometry_net", loss, field.net().theta(), gnet);
    h.add("geometry_grid", loss, field.grid().features(), gfeat);

    const Vec3 xi = grid_interior_point(field.grid().resolutions(), h.rng);
    const Vec3 g = field.sdf_grad(xi);
    VecX xvec(3);
    xvec << xi.x(), xi.y(), xi.z();
    h.add("geometry_spatial", [&] { return field.sdf(Vec3(xvec[0], xvec[1], xvec[2])); }, xvec,
          VecX(g));
  }

  // Color and material heads.
  {
    const int zd = 4;
    DiffuseField dif(tiny_head(), zd, init);
    const Vec3 x(0.2, -0.3, 0.4);
    VecX z = random_unit(zd, h.rng);
    const Vec3 w(0.7, -0.4, 0.9);
    DiffuseField::Cache c;
    dif.eval(x, z, &c);
    VecX gnet = VecX::Zero(dif.net().theta().size());
    VecX dz = VecX::Zero(zd);
    dif.backward(c, w, &dz, &gnet);
    h.add("diffuse_net", [&] { return Vec3(w).dot(dif.eval(x, z)); }, dif.net().theta(), gnet);
    h.add("diffuse_z", [&] { return Vec3(w).dot(dif.eval(x, z)); }, z, dz);
  }
  {
    const int zd = 4;
    SpecularField spec(tiny_head(), zd, 4, init);
    const Vec3 x(0.1, 0.2, -0.3);
    const Vec3 dir = Vec3(0.3, -0.5, 0.8).normalized();
    const Vec3 normal = Vec3(0.1, 0.2, 1.0).normalized();
    const Vec3 w(0.5, -0.8, 0.3);
    VecX in = random_unit(zd + 4, h.rng);  // [z, rho_raw, q]
    in[zd] = uniform(h.rng, -1.0, 0.5);    // keep rho = exp(raw) moderate
    auto eval_in = [&](const VecX& v, SpecularField::Cache* c) {
      const VecX z = v.head(zd);
      const real rho = std::exp(v[zd]);
      const Vec3 q(v[zd + 1], v[zd + 2], v[zd + 3]);
      return spec.eval(x, z, rho, dir, normal, q, c);
    };
    SpecularField::Cache c;
    eval_in(in, &c);
    VecX gnet = VecX::Zero(spec.net().theta().size());
    VecX dz = VecX::Zero(zd);
    real drho = 0.0;
    Vec3 dq = Vec3::Zero();
    spec.backward(c, w, &dz, &drho, &dq, &gnet);
    VecX din(zd + 4);
    din.head(zd) = dz;
    din[zd] = drho * std::exp(in[zd]);  // chain to the raw parameter
    din[zd + 1] = dq.x();
    din[zd + 2] = dq.y();
    din[zd + 3] = dq.z();
    h.add("specular_net", [&] { return Vec3(w).dot(eval_in(in, nullptr)); }, spec.net().theta(),
          gnet);
    h.add("specular_inputs", [&] { return Vec3(w).dot(eval_in(in, nullptr)); }, in, din);
  }
  {
    const int zd = 4;
    MaterialField mat(tiny_head(), zd, init);
    const Vec3 x(-0.2, 0.4, 0.1);
    VecX z = random_unit(zd, h.rng);
    const Vec3 wa(0.6, -0.2, 0.4);
    const real wrough = -0.7, wmetal = 0.5;
    auto loss = [&] {
      const MaterialOutput m = mat.eval(x, z);
      return Vec3(wa).dot(m.albedo) + wrough * m.roughness + wmetal * m.metallic;
    };
    MaterialField::Cache c;
    mat.eval(x, z, &c);
    VecX gnet = VecX::Zero(mat.net().theta().size());
    VecX dz = VecX::Zero(zd);
    mat.backward(c, wa, wrough, wmetal, &dz, &gnet);
    h.add("material_net", loss, mat.net().theta(), gnet);
    h.add("material_z", loss, z, dz);
  }
  {
    BackgroundField bgf(3, 16, 1, init);
    const Vec4 p(0.3, -0.4, 0.8, 0.5);
    const real ws = 0.6;
    const Vec3 wc(0.4, -0.9, 0.2);
    BackgroundField::Cache c;
    real sg;
    Vec3 cg;
    bgf.eval(p, &sg, &cg, &c);
    VecX gnet = VecX::Zero(bgf.net().theta().size());
    bgf.backward(c, ws, wc, &gnet);
    h.add("background_net", [&] {
      real s;
      Vec3 col;
      bgf.eval(p, &s, &col);
      return ws * s + Vec3(wc).dot(col);
    }, bgf.net().theta(), gnet);
  }

  // Density transform.
  {
    VecX sb(2);
    sb << uniform(h.rng, 0.05, 0.4) * (uniform(h.rng) < 0.5 ? -1.0 : 1.0),
        uniform(h.rng, 0.05, 0.3);
    real dsds, dsdb;
    sdf_to_density_grad(sb[0], sb[1], &dsds, &dsdb);
    VecX grad(2);
    grad << dsds, dsdb;
    h.add("density_transform", [&] { return sdf_to_density(sb[0], sb[1]); }, sb, grad);
  }

  // Compositing: density and per-sample colors.
  {
    const int n = 8;
    VecX theta(n + 3 * n);
    for (int i = 0; i < n; ++i) theta[i] = uniform(h.rng, 0.2, 3.0);
    for (int i = 0; i < 3 * n; ++i) theta[n + i] = uniform(h.rng, 0.0, 1.0);
    std::vector<real> delta(n, 0.1);
    const Vec3 wc(0.8, -0.5, 0.3);
    const real wt = 0.7;
    auto unpack = [&](std::vector<real>& sig, std::vector<Vec3>& col) {
      sig.resize(n);
      col.resize(n);
      for (int i = 0; i < n; ++i) {
        sig[static_cast<std::size_t>(i)] = theta[i];
        col[static_cast<std::size_t>(i)] =
            Vec3(theta[n + 3 * i], theta[n + 3 * i + 1], theta[n + 3 * i + 2]);
      }
    };
    auto loss = [&] {
      std::vector<real> sig;
      std::vector<Vec3> col;
      unpack(sig, col);
      const CompositeResult r = composite(sig, col, delta);
      return Vec3(wc).dot(r.color) + wt * r.transmittance;
    };
    std::vector<real> sig;
    std::vector<Vec3> col;
    unpack(sig, col);
    const CompositeResult res = composite(sig, col, delta);
    std::vector<real> dsig;
    std::vector<Vec3> dcol;
    composite_backward(sig, col, delta, res, wc, wt, &dsig, &dcol);
    VecX grad(n + 3 * n);
    for (int i = 0; i < n; ++i) {
      grad[i] = dsig[static_cast<std::size_t>(i)];
      for (int j = 0; j < 3; ++j) grad[n + 3 * i + j] = dcol[static_cast<std::size_t>(i)][j];
    }
    h.add("compositing", loss, theta, grad);
  }

  // Regularizers over a learned field (stencil-defined losses).
  {
    GeometryField field(tiny_geometry(), init);
    std::vector<Vec3> pts;
    for (int i = 0; i < 4; ++i) pts.push_back(0.6 * uniform_sphere(h.rng));
    VecX gnet = VecX::Zero(field.net().theta().size());
    VecX gfeat = VecX::Zero(field.grid().features().size());
    auto seed = [&](const Vec3& p, real dLds) {
      GeometryField::Cache c;
      field.eval(p, &c);
      field.backward(c, dLds, VecX(), 0.0, Vec3::Zero(), nullptr, &gnet, &gfeat);
    };
    eikonal_loss(pts, field, seed);
    auto loss = [&] { return eikonal_loss(pts, field); };
    h.add("eikonal_net", loss, field.net().theta(), gnet);
    h.add("eikonal_grid", loss, field.grid().features(), gfeat);

    std::vector<real> kappas(pts.size(), 5.0);
    Rng probe_rng(99);
    const auto probes = make_curvature_probes(pts, kappas, 0.05, probe_rng, field);
    gnet.setZero();
    gfeat.setZero();
    curvature_loss_eval(probes, field, seed);
    auto closs = [&] { return curvature_loss_eval(probes, field); };
    h.add("curvature_net", closs, field.net().theta(), gnet);
    h.add("curvature_grid", closs, field.grid().features(), gfeat);
  }

  // Spherical Gaussian mixture.
  {
    SgMixture env(4, 6.0, 0.4);
    for (int i = 0; i < env.theta().size(); ++i) env.theta()[i] += uniform(h.rng, -0.2, 0.2);
    std::vector<Vec3> dirs;
    std::vector<Vec3> ws;
    for (int i = 0; i < 6; ++i) {
      dirs.push_back(uniform_sphere(h.rng));
      ws.push_back(Vec3(uniform(h.rng, -1, 1), uniform(h.rng, -1, 1), uniform(h.rng, -1, 1)));
    }
    VecX grad = VecX::Zero(env.theta().size());
    for (std::size_t i = 0; i < dirs.size(); ++i) env.backward(dirs[i], ws[i], grad);
    h.add("sg_light", [&] {
      real acc = 0.0;
      for (std::size_t i = 0; i < dirs.size(); ++i) acc += Vec3(ws[i]).dot(env.eval(dirs[i]));
      return acc;
    }, env.theta(), grad);
  }

  // Visibility grid queried strictly inside the clamp range.
  VisibilityGridConfig vis_cfg;
  vis_cfg.resolution = 4;
  vis_cfg.num_lobes = 3;
  VisibilityGrid vis(vis_cfg);
  {
    Rng vr(seed + 3);
    for (Eigen::Index node = 0; node < vis.node_count(); ++node)
      for (int l = 0; l < vis_cfg.num_lobes; ++l) {
        real* raw = vis.theta().data() + (node * vis_cfg.num_lobes + l) * kSgLobeParams;
        const Vec3 ax = uniform_sphere(vr);
        raw[0] = ax.x();
        raw[1] = ax.y();
        raw[2] = ax.z();
        raw[3] = std::log(2.0);
        for (int c = 0; c < 3; ++c) raw[4 + c] = softplus_inverse(0.12 + 0.05 * uniform(vr));
      }
    std::vector<Vec3> qs, ds;
    std::vector<real> ws;
    for (int i = 0; i < 6; ++i) {
      qs.push_back(0.7 * uniform_sphere(h.rng));
      ds.push_back(uniform_sphere(h.rng));
      ws.push_back(uniform(h.rng, -1.0, 1.0));
    }
    VecX grad = VecX::Zero(vis.theta().size());
    for (std::size_t i = 0; i < qs.size(); ++i)
      vis.query_backward(qs[i], ds[i], ws[i], grad);
    h.add("visibility_grid", [&] {
      real acc = 0.0;
      for (std::size_t i = 0; i < qs.size(); ++i) acc += ws[i] * vis.query(qs[i], ds[i]);
      return acc;
    }, vis.theta(), grad);
  }

  // Cook-Torrance evaluation.
  {
    ShadingPoint sp;
    sp.normal = Vec3::UnitZ();
    sp.omega_o = Vec3(std::sin(0.5), 0.0, std::cos(0.5));
    sp.albedo = Vec3(0.5, 0.4, 0.6);
    sp.roughness = 0.45;
    sp.metallic = 0.3;
    const Vec3 wi = Vec3(-0.4, 0.3, 0.85).normalized();
    const Vec3 w(0.7, -0.3, 0.5);
    VecX theta(5);
    theta << sp.albedo.x(), sp.albedo.y(), sp.albedo.z(), sp.roughness, sp.metallic;
    Vec3 dA = Vec3::Zero();
    real dR = 0.0, dM = 0.0;
    brdf_eval_backward(sp, wi, w, &dA, &dR, &dM);
    VecX grad(5);
    grad << dA.x(), dA.y(), dA.z(), dR, dM;
    h.add("brdf_eval", [&] {
      ShadingPoint s = sp;
      s.albedo = Vec3(theta[0], theta[1], theta[2]);
      s.roughness = theta[3];
      s.metallic = theta[4];
      return Vec3(w).dot(brdf_eval(s, wi));
    }, theta, grad);
  }

  // Monte-Carlo shading on frozen samples: material, light, and visibility.
  {
    SgMixture env(3, 4.0, 0.5);
    ShadingPoint sp;
    sp.position = Vec3(0.2, -0.1, 0.3);
    sp.normal = Vec3(0.2, 0.1, 1.0).normalized();
    sp.omega_o = Vec3(0.4, -0.2, 0.9).normalized();
    sp.albedo = Vec3(0.55, 0.35, 0.45);
    sp.roughness = 0.4;
    sp.metallic = 0.25;
    Rng srng(seed + 11);
    const ShadeResult base = shade(sp, env, &vis, 32, srng);
    VecX mat(5);
    mat << sp.albedo.x(), sp.albedo.y(), sp.albedo.z(), sp.roughness, sp.metallic;
    const Vec3 w(0.8, -0.4, 0.6);
    auto sp_from = [&](const VecX& v) {
      ShadingPoint s = sp;
      s.albedo = Vec3(v[0], v[1], v[2]);
      s.roughness = v[3];
      s.metallic = v[4];
      return s;
    };
    auto loss = [&] { return Vec3(w).dot(shade_with_samples(sp_from(mat), env, &vis, base.samples)); };
    Vec3 dA = Vec3::Zero();
    real dR = 0.0, dM = 0.0;
    VecX g_env = VecX::Zero(env.theta().size());
    VecX g_vis = VecX::Zero(vis.theta().size());
    shade_backward(sp, env, &vis, base.samples, w, &dA, &dR, &dM, &g_env, &g_vis);
    VecX gmat(5);
    gmat << dA.x(), dA.y(), dA.z(), dR, dM;
    h.add("shade_material", loss, mat, gmat);
    h.add("shade_light", loss, env.theta(), g_env);
    h.add("shade_visibility", loss, vis.theta(), g_vis);
  }

  // SAM pull toward frozen centers.
  {
    std::vector<VecX> centers;
    centers.push_back(VecX::Constant(2, 0.2));
    centers.push_back(VecX::Constant(2, 0.8));
    const int k = 5;
    VecX theta(2 * k);
    for (int i = 0; i < 2 * k; ++i) {
      real v = uniform(h.rng, 0.0, 1.0);
      if (std::abs(v - 0.5) < 0.02) v += 0.05;  // stay off the decision boundary
      theta[i] = v;
    }
    auto unpack = [&] {
      std::vector<VecX> vals;
      for (int i = 0; i < k; ++i) vals.push_back(VecX(theta.segment(2 * i, 2)));
      return vals;
    };
    std::vector<VecX> dvals;
    sam_loss(unpack(), centers, &dvals);
    VecX grad(2 * k);
    for (int i = 0; i < k; ++i) grad.segment(2 * i, 2) = dvals[static_cast<std::size_t>(i)];
    h.add("sam_loss", [&] { return sam_loss(unpack(), centers); }, theta, grad);
  }

  return h.reports;
}

}  // namespace facade
