#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "facade/fields.hpp"
#include "facade/model.hpp"

using namespace facade;

namespace {

GeometryConfig small_geometry() {
  GeometryConfig cfg;
  cfg.freq_bands = 4;
  cfg.grid_levels = 2;
  cfg.grid_r_min = 4;
  cfg.grid_r_max = 8;
  cfg.grid_feature_dim = 2;
  cfg.z_dim = 6;
  cfg.hidden = 32;
  cfg.hidden_layers = 1;
  return cfg;
}

}  // namespace

TEST_CASE("sdf to density transform") {
  // Value at the boundary and continuity across it.
  CHECK(sdf_to_density(0.0, 0.1) == doctest::Approx(5.0));
  CHECK(std::abs(sdf_to_density(-1e-13, 0.1) - sdf_to_density(1e-13, 0.1)) < 1e-9);

  // Hand value on the positive branch.
  CHECK(sdf_to_density(0.1, 0.1) == doctest::Approx(5.0 * std::exp(-1.0)));

  // Asymptotics.
  CHECK(sdf_to_density(-50.0, 0.1) == doctest::Approx(10.0));
  CHECK(sdf_to_density(50.0, 0.1) == doctest::Approx(0.0));

  // Monotone nonincreasing over a dense sweep.
  real prev = std::numeric_limits<real>::infinity();
  for (int i = 0; i < 10000; ++i) {
    const real s = -2.0 + 4.0 * i / 9999.0;
    const real v = sdf_to_density(s, 0.05);
    CHECK(v <= prev + 1e-15);
    CHECK(v >= 0.0);
    prev = v;
  }

  CHECK_THROWS_AS(sdf_to_density(0.0, 0.0), DomainError);
  CHECK_THROWS_AS(sdf_to_density(0.0, -0.1), DomainError);
}

TEST_CASE("sdf to density derivative matches finite differences") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const real s = uniform(rng, -0.5, 0.5);
    const real beta = uniform(rng, 0.01, 0.3);
    if (std::abs(s) < 1e-3) continue;  // kink at s=0
    real ds, db;
    sdf_to_density_grad(s, beta, &ds, &db);
    const real h = 1e-6;
    const real fd_s = (sdf_to_density(s + h, beta) - sdf_to_density(s - h, beta)) / (2 * h);
    const real fd_b = (sdf_to_density(s, beta + h) - sdf_to_density(s, beta - h)) / (2 * h);
    CHECK(ds == doctest::Approx(fd_s).epsilon(1e-4));
    CHECK(db == doctest::Approx(fd_b).epsilon(1e-4));
  }
}

TEST_CASE("reflection formula") {
  const Vec3 n = Vec3::UnitZ();
  CHECK((reflect(-n, n) - n).norm() < 1e-12);

  const Vec3 d = Vec3(1.0, 0.0, -1.0).normalized();
  const Vec3 r = reflect(d, n);
  CHECK((r - Vec3(1.0, 0.0, 1.0).normalized()).norm() < 1e-12);

  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Vec3 nn = uniform_sphere(rng);
    const Vec3 dd = uniform_sphere(rng);
    const Vec3 rr = reflect(dd, nn);
    CHECK(rr.norm() == doctest::Approx(1.0));
    CHECK(rr.dot(nn) == doctest::Approx(-dd.dot(nn)));
  }
}

TEST_CASE("color composition") {
  const Vec3 cd(0.2, 0.2, 0.2), cs(1.0, 0.0, 0.0);
  CHECK((compose_color(cd, cs, Vec3::Zero()) - cd).norm() < 1e-15);
  CHECK((compose_color(cd, cs, Vec3::Constant(0.5)) - Vec3(0.7, 0.2, 0.2)).norm() < 1e-15);
  CHECK((compose_color(Vec3::Zero(), cs, Vec3::Ones()) - cs).norm() < 1e-15);
}

TEST_CASE("geometry field sphere initialization and ranges") {
  Rng rng(7);
  GeometryField field(small_geometry(), rng);
  field.sphere_init(0.4, 400, rng);

  CHECK(field.sdf(Vec3::Zero()) < 0.0);
  CHECK(field.sdf(Vec3(0.8, 0.0, 0.0)) > 0.0);

  for (int i = 0; i < 1000; ++i) {
    Vec3 x(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    const GeometryOutput o = field.eval(x);
    CHECK(o.rho > 0.0);
    for (int j = 0; j < 3; ++j) {
      CHECK(o.q[j] >= 0.0);
      CHECK(o.q[j] <= 1.0);
    }
    CHECK(o.z.size() == 6);
  }
}

TEST_CASE("geometry spatial gradient matches finite differences") {
  Rng rng(8);
  GeometryField field(small_geometry(), rng);
  field.sphere_init(0.4, 200, rng);
  int checked = 0;
  for (int i = 0; i < 200 && checked < 50; ++i) {
    Vec3 x(uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8));
    // Stay away from grid cell faces where trilinear interpolation kinks.
    bool interior = true;
    for (int res : {4, 8})
      for (int j = 0; j < 3; ++j) {
        const real f = 0.5 * (x[j] + 1.0) * (res - 1);
        if (std::abs(f - std::round(f)) < 0.03) interior = false;
      }
    if (!interior) continue;
    ++checked;
    const Vec3 g = field.sdf_grad(x);
    const real h = 1e-5;
    for (int j = 0; j < 3; ++j) {
      Vec3 a = x, b = x;
      a[j] += h;
      b[j] -= h;
      const real fd = (field.sdf(a) - field.sdf(b)) / (2 * h);
      CHECK(g[j] == doctest::Approx(fd).epsilon(1e-3));
    }
  }
  CHECK(checked == 50);
}

TEST_CASE("normal_at on analytic shapes") {
  SphereSdf sphere(Vec3::Zero(), 1.0);
  CHECK((sphere.normal(Vec3(1, 0, 0)) - Vec3(1, 0, 0)).norm() < 1e-6);
  const Vec3 p = Vec3(0.3, -0.4, 0.6).normalized() * 1.7;
  CHECK((sphere.normal(p) - p.normalized()).norm() < 1e-6);

  PlaneSdf plane;  // z = 0
  CHECK((plane.normal(Vec3(3.0, -2.0, 0.7)) - Vec3(0, 0, 1)).norm() < 1e-6);

  BoxSdf box(Vec3::Zero(), Vec3(0.5, 0.5, 0.5));
  CHECK((box.normal(Vec3(0.9, 0.0, 0.0)) - Vec3(1, 0, 0)).norm() < 1e-6);
}

TEST_CASE("diffuse field determinism and range") {
  Rng rng(9);
  HeadConfig cfg;
  cfg.hidden = 32;
  cfg.hidden_layers = 1;
  DiffuseField field(cfg, 6, rng);
  for (int i = 0; i < 1000; ++i) {
    Vec3 x(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    VecX z(6);
    for (int j = 0; j < 6; ++j) z[j] = uniform(rng, -1.0, 1.0);
    const Vec3 a = field.eval(x, z);
    const Vec3 b = field.eval(x, z);
    CHECK((a - b).norm() == 0.0);
    for (int j = 0; j < 3; ++j) {
      CHECK(a[j] >= 0.0);
      CHECK(a[j] <= 1.0);
    }
  }
}

TEST_CASE("specular field range and rho contract") {
  Rng rng(10);
  HeadConfig cfg;
  cfg.hidden = 32;
  cfg.hidden_layers = 1;
  SpecularField field(cfg, 6, 4, rng);
  VecX z = VecX::Zero(6);
  const Vec3 n = Vec3::UnitZ();
  const Vec3 d = Vec3(0.3, 0.1, -0.95).normalized();
  CHECK_THROWS_AS(field.eval(Vec3::Zero(), z, 0.0, d, n, Vec3::Zero()), DomainError);
  CHECK_THROWS_AS(field.eval(Vec3::Zero(), z, -1.0, d, n, Vec3::Zero()), DomainError);
  for (int i = 0; i < 1000; ++i) {
    Vec3 x(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    for (int j = 0; j < 6; ++j) z[j] = uniform(rng, -1.0, 1.0);
    const Vec3 view = uniform_sphere(rng);
    const Vec3 normal = uniform_sphere(rng);
    const Vec3 c = field.eval(x, z, uniform(rng, 0.05, 2.0), view, normal,
                              Vec3(uniform(rng), uniform(rng), uniform(rng)));
    for (int j = 0; j < 3; ++j) {
      CHECK(c[j] >= 0.0);
      CHECK(c[j] <= 1.0);
    }
  }
}

TEST_CASE("specular field output depends on the view direction") {
  Rng rng(11);
  HeadConfig cfg;
  cfg.hidden = 32;
  cfg.hidden_layers = 1;
  SpecularField field(cfg, 6, 4, rng);
  VecX z = VecX::Zero(6);
  const Vec3 n = Vec3::UnitZ();
  real max_diff = 0.0;
  for (int i = 0; i < 100; ++i) {
    Vec3 d1 = uniform_sphere(rng), d2 = uniform_sphere(rng);
    if (d1.z() > 0) d1.z() = -d1.z();
    if (d2.z() > 0) d2.z() = -d2.z();
    const Vec3 a = field.eval(Vec3::Zero(), z, 0.3, d1, n, Vec3::Constant(0.5));
    const Vec3 b = field.eval(Vec3::Zero(), z, 0.3, d2, n, Vec3::Constant(0.5));
    max_diff = std::max(max_diff, (a - b).cwiseAbs().maxCoeff());
  }
  CHECK(max_diff > 0.0);
}

TEST_CASE("material field range and determinism") {
  Rng rng(12);
  HeadConfig cfg;
  cfg.hidden = 32;
  cfg.hidden_layers = 1;
  MaterialField field(cfg, 6, rng);
  for (int i = 0; i < 1000; ++i) {
    Vec3 x(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    VecX z(6);
    for (int j = 0; j < 6; ++j) z[j] = uniform(rng, -1.0, 1.0);
    const MaterialOutput a = field.eval(x, z);
    const MaterialOutput b = field.eval(x, z);
    CHECK((a.albedo - b.albedo).norm() == 0.0);
    CHECK(a.roughness == b.roughness);
    for (int j = 0; j < 3; ++j) {
      CHECK(a.albedo[j] >= 0.0);
      CHECK(a.albedo[j] <= 1.0);
    }
    CHECK(a.roughness >= 0.0);
    CHECK(a.roughness <= 1.0);
    CHECK(a.metallic >= 0.0);
    CHECK(a.metallic <= 1.0);
  }
}

TEST_CASE("learned normals match finite-difference directions") {
  Rng rng(13);
  GeometryField field(small_geometry(), rng);
  field.sphere_init(0.4, 400, rng);
  int checked = 0;
  for (int i = 0; i < 400 && checked < 50; ++i) {
    // Surface points of the fitted sphere.
    Vec3 x = uniform_sphere(rng) * 0.4;
    bool interior = true;
    for (int res : {4, 8})
      for (int j = 0; j < 3; ++j) {
        const real f = 0.5 * (x[j] + 1.0) * (res - 1);
        if (std::abs(f - std::round(f)) < 0.03) interior = false;
      }
    if (!interior) continue;
    ++checked;
    const Vec3 n = field.normal(x);
    const Vec3 fd = field.stencil_grad(x, 1e-5).normalized();
    const real angle = std::acos(std::clamp(n.dot(fd), -1.0, 1.0));
    CHECK(angle < 0.5 * kPi / 180.0);
  }
  CHECK(checked == 50);
}
