#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "facade/renderer.hpp"
#include "facade/synth.hpp"

using namespace facade;

TEST_CASE("ray generation through the pinhole model") {
  Camera cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = 32.0;
  cam.cy = 24.0;
  cam.width = 64;
  cam.height = 48;

  // Principal point with identity pose looks along +z.
  const Ray center = cam.generate_ray(32.0, 24.0);
  CHECK((center.dir - Vec3(0, 0, 1)).norm() < 1e-12);

  // Off-center pixels bend toward the correct side.
  CHECK(cam.generate_ray(40.0, 24.0).dir.x() > 0.0);
  CHECK(cam.generate_ray(20.0, 24.0).dir.x() < 0.0);
  CHECK(cam.generate_ray(32.0, 40.0).dir.y() > 0.0);

  // Project/unproject round trip.
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const real u = uniform(rng, 1.0, 63.0);
    const real v = uniform(rng, 1.0, 47.0);
    const Ray ray = cam.generate_ray(u, v);
    const Vec3 p = ray.origin + uniform(rng, 0.5, 5.0) * ray.dir;
    real pu, pv, depth;
    REQUIRE(cam.project(p, &pu, &pv, &depth));
    CHECK(pu == doctest::Approx(u).epsilon(1e-6));
    CHECK(pv == doctest::Approx(v).epsilon(1e-6));
    CHECK(depth > 0.0);
  }
}

TEST_CASE("posed camera round trip") {
  SynthConfig cfg;
  for (int view = 0; view < 6; ++view) {
    const Camera cam = synth_camera(cfg, view);
    Rng rng(17 + view);
    for (int i = 0; i < 50; ++i) {
      const real u = uniform(rng, 1.0, cfg.width - 1.0);
      const real v = uniform(rng, 1.0, cfg.height - 1.0);
      const Ray ray = cam.generate_ray(u, v);
      CHECK(ray.dir.norm() == doctest::Approx(1.0));
      const Vec3 p = ray.origin + uniform(rng, 0.5, 4.0) * ray.dir;
      real pu, pv, depth;
      REQUIRE(cam.project(p, &pu, &pv, &depth));
      CHECK(pu == doctest::Approx(u).epsilon(1e-4));
      CHECK(pv == doctest::Approx(v).epsilon(1e-4));
    }
  }
}

TEST_CASE("stratified sampling") {
  auto mid = sample_points(0.0, 1.0, 4, false, nullptr);
  REQUIRE(mid.size() == 4);
  CHECK(mid[0] == doctest::Approx(0.125));
  CHECK(mid[1] == doctest::Approx(0.375));
  CHECK(mid[2] == doctest::Approx(0.625));
  CHECK(mid[3] == doctest::Approx(0.875));

  Rng rng(5);
  auto jit = sample_points(2.0, 3.0, 16, true, &rng);
  for (int i = 0; i < 16; ++i) {
    CHECK(jit[i] >= 2.0 + i / 16.0);
    CHECK(jit[i] <= 2.0 + (i + 1) / 16.0);
  }
  for (int i = 1; i < 16; ++i) CHECK(jit[i] > jit[i - 1]);

  Rng a(9), b(9);
  CHECK(sample_points(0.0, 1.0, 8, true, &a) == sample_points(0.0, 1.0, 8, true, &b));
}

TEST_CASE("compositing hand cases") {
  // Opaque single sample.
  {
    auto res = composite({1e6}, {Vec3::Ones()}, {1.0});
    CHECK((res.color - Vec3::Ones()).norm() < 1e-9);
    CHECK(res.transmittance < 1e-9);
  }
  // Two samples with alpha 0.5 each: C = 0.5*c0 + 0.25*c1, T = 0.25.
  {
    const real sigma = std::log(2.0);  // alpha = 1 - exp(-sigma) = 0.5
    auto res = composite({sigma, sigma}, {Vec3::Ones(), Vec3::Zero()}, {1.0, 1.0});
    CHECK(res.color.x() == doctest::Approx(0.5));
    CHECK(res.transmittance == doctest::Approx(0.25));
  }
  // Empty space.
  {
    auto res = composite({0.0, 0.0, 0.0}, {Vec3::Ones(), Vec3::Ones(), Vec3::Ones()},
                         {0.3, 0.3, 0.3});
    CHECK(res.color.norm() == 0.0);
    CHECK(res.transmittance == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(composite({-1.0}, {Vec3::Zero()}, {1.0}), DomainError);
}

TEST_CASE("compositing telescoping identity") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(uniform(rng) * 32);
    std::vector<real> sigma(n), delta(n);
    std::vector<Vec3> color(n, Vec3::Constant(0.5));
    for (int i = 0; i < n; ++i) {
      sigma[i] = uniform(rng, 0.0, 20.0);
      delta[i] = uniform(rng, 1e-3, 0.2);
    }
    auto res = composite(sigma, color, delta);
    real wsum = 0.0;
    for (real w : res.weight) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      wsum += w;
    }
    CHECK(wsum + res.transmittance == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("homogeneous medium converges to the exponential solution") {
  // T = exp(-sigma * length) for constant density; N=512 within 1%.
  for (real od : {0.5, 2.0, 5.0}) {
    const real length = 2.0;
    const real sigma = od / length;
    const int n = 512;
    std::vector<real> sig(n, sigma), delta(n, length / n);
    std::vector<Vec3> color(n, Vec3::Ones());
    auto res = composite(sig, color, delta);
    const real expected_t = std::exp(-od);
    CHECK(std::abs(res.transmittance - expected_t) / expected_t < 0.01);
    // And the color approaches 1 - T for a unit-albedo medium.
    CHECK(res.color.x() == doctest::Approx(1.0 - res.transmittance).epsilon(1e-9));
  }
}

TEST_CASE("compositing gradients match finite differences") {
  Rng rng(7);
  const int n = 6;
  std::vector<real> sigma(n), delta(n);
  std::vector<Vec3> color(n);
  for (int i = 0; i < n; ++i) {
    sigma[i] = uniform(rng, 0.1, 5.0);
    delta[i] = uniform(rng, 0.05, 0.2);
    color[i] = Vec3(uniform(rng), uniform(rng), uniform(rng));
  }
  const Vec3 dC(0.3, -0.7, 0.2);
  const real dT = 0.4;
  auto res = composite(sigma, color, delta);
  std::vector<real> dsig;
  std::vector<Vec3> dcol;
  composite_backward(sigma, color, delta, res, dC, dT, &dsig, &dcol);

  auto loss = [&] {
    auto r = composite(sigma, color, delta);
    return dC.dot(r.color) + dT * r.transmittance;
  };
  const real h = 1e-6;
  for (int i = 0; i < n; ++i) {
    const real keep = sigma[i];
    sigma[i] = keep + h;
    const real up = loss();
    sigma[i] = keep - h;
    const real dn = loss();
    sigma[i] = keep;
    CHECK(dsig[i] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-4));
    for (int c = 0; c < 3; ++c) {
      const real keepc = color[i][c];
      color[i][c] = keepc + h;
      const real upc = loss();
      color[i][c] = keepc - h;
      const real dnc = loss();
      color[i][c] = keepc;
      CHECK(dcol[i][c] == doctest::Approx((upc - dnc) / (2 * h)).epsilon(1e-4));
    }
  }
}

TEST_CASE("compositing splits at interior points") {
  Rng rng(8);
  const int n = 12;
  std::vector<real> sigma(n), delta(n);
  std::vector<Vec3> color(n);
  for (int i = 0; i < n; ++i) {
    sigma[i] = uniform(rng, 0.0, 8.0);
    delta[i] = uniform(rng, 0.01, 0.3);
    color[i] = Vec3(uniform(rng), uniform(rng), uniform(rng));
  }
  auto whole = composite(sigma, color, delta);
  for (int split : {1, 5, 9}) {
    auto front = composite({sigma.begin(), sigma.begin() + split},
                           {color.begin(), color.begin() + split},
                           {delta.begin(), delta.begin() + split});
    auto back = composite({sigma.begin() + split, sigma.end()},
                          {color.begin() + split, color.end()},
                          {delta.begin() + split, delta.end()});
    const Vec3 joined = front.color + front.transmittance * back.color;
    const real t_joined = front.transmittance * back.transmittance;
    CHECK((joined - whole.color).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t_joined == doctest::Approx(whole.transmittance).epsilon(1e-12));
  }
}

TEST_CASE("inverted sphere parameterization") {
  const Vec4 a = invert_sphere_param(Vec3(2, 0, 0));
  CHECK((a - Vec4(1, 0, 0, 0.5)).norm() < 1e-12);
  const Vec4 b = invert_sphere_param(Vec3(0, 0, 4));
  CHECK((b - Vec4(0, 0, 1, 0.25)).norm() < 1e-12);
  const Vec4 c = invert_sphere_param(Vec3(0, 1e9, 0));
  CHECK(c[3] == doctest::Approx(0.0).epsilon(1e-8));
  CHECK_THROWS_AS(invert_sphere_param(Vec3(0.5, 0, 0)), DomainError);
}

TEST_CASE("ray sphere intersection") {
  auto hit = ray_sphere_intersect(Vec3(0, 0, -3), Vec3(0, 0, 1), 1.0);
  REQUIRE(hit);
  CHECK(hit->first == doctest::Approx(2.0));
  CHECK(hit->second == doctest::Approx(4.0));
  CHECK(!ray_sphere_intersect(Vec3(0, 2, -3), Vec3(0, 0, 1), 1.0));
  // Origin inside: entry clamps to zero.
  auto inside = ray_sphere_intersect(Vec3::Zero(), Vec3(1, 0, 0), 1.0);
  REQUIRE(inside);
  CHECK(inside->first == doctest::Approx(0.0));
  CHECK(inside->second == doctest::Approx(1.0));
}

TEST_CASE("render_pixel falls back to pure background on a miss") {
  Rng rng(21);
  NeuralScene scene{ModelConfig{}, rng};
  // Keep the default (untrained) geometry: push the SDF up so the foreground
  // is empty by fitting toward a large positive constant.
  scene.geometry.sphere_init(-2.0, 200, rng);

  Camera cam;
  cam.fx = cam.fy = 50.0;
  cam.cx = cam.cy = 16.0;
  cam.width = cam.height = 32;
  Mat4 pose = Mat4::Identity();
  pose(2, 3) = -3.0;
  cam.cam_to_world = pose;

  RenderConfig cfg;
  cfg.fg_samples = 16;
  cfg.bg_samples = 8;

  // A ray that misses the unit sphere entirely.
  PixelAux aux;
  const Ray miss = cam.generate_ray(1.0, 1.0);
  REQUIRE(!ray_sphere_intersect(miss.origin, miss.dir, 1.0));
  render_pixel(scene, miss, cfg, nullptr, &aux);
  CHECK(aux.t_fg == doctest::Approx(1.0));

  // A ray through the (empty) foreground: transmittance stays ~1.
  PixelAux aux2;
  render_pixel(scene, cam.generate_ray(16.0, 16.0), cfg, nullptr, &aux2);
  CHECK(aux2.t_fg > 0.99);
}
