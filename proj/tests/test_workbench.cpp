#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "facade/brdf.hpp"
#include "facade/dataset.hpp"
#include "facade/mesh.hpp"
#include "facade/metrics.hpp"
#include "facade/synth.hpp"

using namespace facade;

namespace {

SynthConfig tiny_config() {
  SynthConfig cfg;
  cfg.views = 6;
  cfg.eval_views = 2;
  cfg.width = 24;
  cfg.height = 24;
  cfg.spp = 4;
  cfg.cloud_points = 500;
  return cfg;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("synthesis is deterministic and writes a loadable dataset") {
  const AnalyticScene scene = benchmark_scene();
  const SynthConfig cfg = tiny_config();

  TempDir dir("facade_synth_rt");
  std::vector<GroundTruthMaps> gt;
  const SceneDataset ds = synth_scene(scene, cfg, dir.path.string(), &gt);
  REQUIRE(static_cast<int>(ds.views.size()) == cfg.views);
  REQUIRE(static_cast<int>(gt.size()) == cfg.views);
  CHECK(static_cast<int>(ds.train_ids.size()) == cfg.views - cfg.eval_views);
  CHECK(static_cast<int>(ds.eval_ids.size()) == cfg.eval_views);
  CHECK(!ds.points.empty());

  // Same seed, same pixels.
  const Camera cam = synth_camera(cfg, 0);
  const Image a = oracle_render(scene, cam, cfg.spp, cfg.seed);
  const Image b = oracle_render(scene, cam, cfg.spp, cfg.seed);
  REQUIRE(a.width == b.width);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) CHECK((a.at(x, y) - b.at(x, y)).norm() == 0.0);

  // Reload reproduces the normalized views and cloud.
  const SceneDataset re = load_dataset(dir.path.string());
  REQUIRE(re.views.size() == ds.views.size());
  CHECK(re.points.size() == ds.points.size());
  CHECK(re.train_ids == ds.train_ids);
  CHECK(re.eval_ids == ds.eval_ids);
  real max_px = 0.0, max_cam = 0.0;
  for (std::size_t v = 0; v < ds.views.size(); ++v) {
    max_cam = std::max(max_cam, (re.views[v].camera.position() - ds.views[v].camera.position()).norm());
    for (int y = 0; y < ds.views[v].image.height; ++y)
      for (int x = 0; x < ds.views[v].image.width; ++x)
        max_px = std::max(max_px,
                          (re.views[v].image.at(x, y) - ds.views[v].image.at(x, y)).norm());
    REQUIRE(re.views[v].mask.has_value());
  }
  CHECK(max_px < 1e-5);   // EXR io is float32
  CHECK(max_cam < 1e-6);
}

TEST_CASE("dataset normalization contract") {
  const AnalyticScene scene = benchmark_scene();
  TempDir dir("facade_synth_norm");
  synth_scene(scene, tiny_config(), dir.path.string());
  const SceneDataset ds = load_dataset(dir.path.string());

  // Cameras outside the unit sphere.
  for (const auto& v : ds.views) CHECK(v.camera.position().norm() > 1.0);
  // Point cloud (scene surface) inside radius 0.8.
  real max_r = 0.0;
  for (const Vec3& p : ds.points) max_r = std::max(max_r, p.norm());
  CHECK(max_r <= 0.8 + 1e-9);
}

TEST_CASE("instance masks label each primitive") {
  const AnalyticScene scene = benchmark_scene();
  SynthConfig cfg = tiny_config();
  cfg.width = cfg.height = 48;
  GroundTruthMaps gt;
  oracle_render(scene, synth_camera(cfg, 0), 1, cfg.seed, &gt);
  std::vector<int> counts(scene.primitives.size(), 0);
  int misses = 0;
  for (int y = 0; y < gt.instance.height; ++y)
    for (int x = 0; x < gt.instance.width; ++x) {
      const int id = gt.instance.at(x, y);
      REQUIRE(id >= -1);
      REQUIRE(id < static_cast<int>(scene.primitives.size()));
      if (id < 0)
        ++misses;
      else
        ++counts[static_cast<std::size_t>(id)];
    }
  CHECK(misses > 0);
  for (std::size_t i = 0; i < counts.size(); ++i) CHECK(counts[i] > 0);

  // GT maps agree with the labels: labeled pixels carry the primitive's
  // albedo and positive depth.
  for (int y = 0; y < gt.instance.height; ++y)
    for (int x = 0; x < gt.instance.width; ++x) {
      const int id = gt.instance.at(x, y);
      if (id < 0) {
        CHECK(gt.depth.at(x, y) == 0.0);
        continue;
      }
      CHECK(gt.depth.at(x, y) > 0.0);
      CHECK((gt.albedo.at(x, y) - scene.primitives[static_cast<std::size_t>(id)].albedo).norm() <
            1e-6);
      CHECK(std::abs(gt.normal.at(x, y).norm() - 1.0) < 1e-6);
    }
}

TEST_CASE("oracle shading cross-checks the differentiable path") {
  // Unshadowed oracle vs the importance-sampled estimator on the same
  // material and light: independent implementations, same integral.
  const AnalyticScene scene = benchmark_scene();
  Rng rng(61);
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 12; ++trial) {
    const Vec3 seed = uniform_sphere(rng) * uniform(rng, 0.2, 0.6);
    // Project to the nearest surface.
    Vec3 p = seed;
    for (int it = 0; it < 32; ++it) p -= scene.sdf(p) * scene.normal(p);
    if (std::abs(scene.sdf(p)) > 1e-6) continue;
    const int prim = scene.nearest(p);
    const Vec3 n = scene.normal(p);
    Vec3 wo = uniform_sphere(rng);
    if (wo.dot(n) < 0.2) continue;

    Rng oracle_rng(100 + static_cast<std::uint64_t>(trial));
    const Vec3 ref = oracle_shade(scene, p, n, wo, scene.primitives[static_cast<std::size_t>(prim)],
                                  4096, oracle_rng, false);

    ShadingPoint sp;
    sp.position = p;
    sp.normal = n;
    sp.omega_o = wo;
    sp.albedo = scene.primitives[static_cast<std::size_t>(prim)].albedo;
    sp.roughness = scene.primitives[static_cast<std::size_t>(prim)].roughness;
    sp.metallic = scene.primitives[static_cast<std::size_t>(prim)].metallic;
    Rng shade_rng(200 + static_cast<std::uint64_t>(trial));
    const ShadeResult est = shade(sp, scene.env, nullptr, 4096, shade_rng);

    const real scale = std::max(ref.maxCoeff(), 1e-3);
    CHECK((est.color - ref).cwiseAbs().maxCoeff() / scale < 0.03);
    ++checked;
  }
  CHECK(checked >= 12);
}

TEST_CASE("surface extraction on analytic shapes") {
  // Sphere: all vertices within a cell of the true radius, closed surface.
  SphereSdf sphere(Vec3::Zero(), 0.6);
  const int res = 48;
  const real h = 2.0 / (res - 1);
  const TriangleMesh mesh =
      extract_mesh([&](const Vec3& x) { return sphere.sdf(x); }, res, Vec3::Constant(-1.0),
                   Vec3::Constant(1.0));
  REQUIRE(!mesh.empty());
  CHECK(mesh.boundary_edge_count() == 0);
  for (const Vec3& v : mesh.vertices) {
    CHECK(v.norm() > 0.6 - h);
    CHECK(v.norm() < 0.6 + h);
    CHECK(std::abs(sphere.sdf(v)) < h);
  }

  // Box: mesh AABB within one cell of the true box.
  BoxSdf box(Vec3(0.1, -0.05, 0.0), Vec3(0.3, 0.2, 0.4));
  const TriangleMesh bm = extract_mesh([&](const Vec3& x) { return box.sdf(x); }, res,
                                       Vec3::Constant(-1.0), Vec3::Constant(1.0));
  REQUIRE(!bm.empty());
  Vec3 lo = Vec3::Constant(10.0), hi = Vec3::Constant(-10.0);
  for (const Vec3& v : bm.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  CHECK((lo - (box.center() - box.half_extent())).cwiseAbs().maxCoeff() < h);
  CHECK((hi - (box.center() + box.half_extent())).cwiseAbs().maxCoeff() < h);

  // No zero crossing, no mesh.
  CHECK(extract_mesh([](const Vec3&) { return 1.0; }, 16, Vec3::Constant(-1.0),
                     Vec3::Constant(1.0))
            .empty());
}

TEST_CASE("mesh serialization round trip") {
  SphereSdf sphere(Vec3(0.1, 0.0, -0.1), 0.5);
  const TriangleMesh mesh =
      extract_mesh([&](const Vec3& x) { return sphere.sdf(x); }, 24, Vec3::Constant(-1.0),
                   Vec3::Constant(1.0));
  TempDir dir("facade_mesh_rt");
  const std::string path = (dir.path / "m.ply").string();
  write_ply_mesh(path, mesh);
  const TriangleMesh re = read_ply_mesh(path);
  REQUIRE(re.vertices.size() == mesh.vertices.size());
  REQUIRE(re.triangles.size() == mesh.triangles.size());
  real max_d = 0.0;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    max_d = std::max(max_d, (re.vertices[i] - mesh.vertices[i]).norm());
  CHECK(max_d < 1e-6);  // float32 storage
  CHECK(re.triangles == mesh.triangles);
}

TEST_CASE("mesh sampling stays on the surface") {
  SphereSdf sphere(Vec3::Zero(), 0.7);
  const TriangleMesh mesh =
      extract_mesh([&](const Vec3& x) { return sphere.sdf(x); }, 40, Vec3::Constant(-1.0),
                   Vec3::Constant(1.0));
  Rng rng(62);
  const auto pts = sample_mesh_points(mesh, 5000, rng);
  REQUIRE(pts.size() == 5000);
  for (const Vec3& p : pts) CHECK(std::abs(p.norm() - 0.7) < 0.01);
}

TEST_CASE("chamfer distance properties") {
  Rng rng(63);
  std::vector<Vec3> cloud;
  for (int i = 0; i < 500; ++i) cloud.push_back(uniform_sphere(rng));

  CHECK(chamfer_distance(cloud, cloud).mean == doctest::Approx(0.0));

  const std::vector<Vec3> a{Vec3::Zero()};
  const std::vector<Vec3> b{Vec3(1.0, 0.0, 0.0)};
  const auto r = chamfer_distance(a, b);
  CHECK(r.mean == doctest::Approx(1.0));
  CHECK(r.pred_to_ref == doctest::Approx(1.0));

  // Rigid motion applied to both clouds leaves the distance unchanged.
  std::vector<Vec3> jittered;
  Rng jrng(64);
  for (const Vec3& p : cloud) jittered.push_back(p + 0.01 * uniform_sphere(jrng));
  const real base = chamfer_distance(jittered, cloud).mean;
  const Mat3 R = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const Vec3 t(0.3, -0.2, 0.5);
  std::vector<Vec3> ra, rb;
  for (const Vec3& p : jittered) ra.push_back(R * p + t);
  for (const Vec3& p : cloud) rb.push_back(R * p + t);
  CHECK(chamfer_distance(ra, rb).mean == doctest::Approx(base).epsilon(1e-9));

  CHECK_THROWS_AS(chamfer_distance({}, cloud), DomainError);
}

TEST_CASE("psnr hand cases and mask contract") {
  Image a(8, 8), b(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      a.at(x, y) = Vec3::Constant(0.5);
      b.at(x, y) = Vec3::Constant(0.5);
    }
  CHECK(psnr(a, a).infinite);

  // Uniform squared error 0.01 -> 20 dB.
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) b.at(x, y) = Vec3::Constant(0.6);
  const auto r = psnr(a, b);
  CHECK(!r.infinite);
  CHECK(r.db == doctest::Approx(20.0).epsilon(1e-9));

  // Masked evaluation ignores corrupted unlabeled pixels.
  LabelImage mask(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) mask.at(x, y) = x < 4 ? 0 : -1;
  Image c = b;
  for (int y = 0; y < 8; ++y)
    for (int x = 4; x < 8; ++x) c.at(x, y) = Vec3::Constant(123.0);
  const auto rm = psnr(a, c, &mask);
  CHECK(rm.evaluated_pixels == 32);
  CHECK(rm.db == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("missing pose errors name the offending file") {
  const AnalyticScene scene = benchmark_scene();
  TempDir dir("facade_badpose");
  synth_scene(scene, tiny_config(), dir.path.string());
  // Drop one pose pair (pose line + observations line) from images.txt.
  const std::string imgs = (dir.path / "images.txt").string();
  {
    std::ifstream in(imgs);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    std::ofstream out(imgs);
    int dropped = 0;
    for (const auto& l : lines) {
      if (l.find("view_002.exr") != std::string::npos) {
        dropped = 2;  // this pose line and the following observations line
      }
      if (dropped > 0) {
        --dropped;
        continue;
      }
      out << l << "\n";
    }
  }
  try {
    load_dataset(dir.path.string());
    FAIL("expected a missing-pose error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("view_002") != std::string::npos);
  }
}
