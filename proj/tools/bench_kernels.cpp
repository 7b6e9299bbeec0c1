// Timing comparison of the serial reference kernels against their
// OpenMP-parallel counterparts. Results must agree bitwise (the parallel
// versions only change the loop order across independent pixels/nodes).

#include <chrono>
#include <cstdio>

#include <omp.h>

#include "facade/renderer.hpp"
#include "facade/sg.hpp"
#include "facade/synth.hpp"
#include "facade/trainer.hpp"

using namespace facade;

namespace {

double now() { return std::chrono::duration<double>(
    std::chrono::steady_clock::now().time_since_epoch()).count(); }

template <typename F>
double time_of(F&& f) {
  const double t0 = now();
  f();
  return now() - t0;
}

double max_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    m = std::max(m, (a.pixels[i] - b.pixels[i]).cwiseAbs().maxCoeff());
  return m;
}

void report(const char* name, double serial, double parallel, double diff) {
  std::printf("%-24s serial %8.3fs  parallel %8.3fs  speedup %5.2fx  max|diff| %g\n", name,
              serial, parallel, serial / std::max(parallel, 1e-12), diff);
}

}  // namespace

int main() {
  std::printf("omp_get_max_threads() = %d\n", omp_get_max_threads());

  const AnalyticScene analytic = benchmark_scene();
  SynthConfig sc;
  sc.width = 48;
  sc.height = 48;
  sc.spp = 16;
  const Camera cam = synth_camera(sc, 0);

  {
    Image a, b;
    const double ts = time_of([&] { a = oracle_render(analytic, cam, sc.spp, 1, nullptr, false); });
    const double tp = time_of([&] { b = oracle_render(analytic, cam, sc.spp, 1, nullptr, true); });
    report("oracle_render", ts, tp, max_diff(a, b));
  }

  Rng rng(3);
  NeuralScene neural{ModelConfig{}, rng};
  neural.geometry.sphere_init(0.5, 120, rng);

  {
    RenderConfig rc;
    rc.fg_samples = 24;
    rc.bg_samples = 8;
    Camera small = cam;
    small.width = 32;
    small.height = 32;
    small.fx *= 32.0 / sc.width;
    small.fy *= 32.0 / sc.height;
    small.cx *= 32.0 / sc.width;
    small.cy *= 32.0 / sc.height;
    Image a, b;
    const double ts = time_of([&] { a = render_image(neural, small, rc, false); });
    const double tp = time_of([&] { b = render_image(neural, small, rc, true); });
    report("render_image", ts, tp, max_diff(a, b));
  }

  {
    VisibilityGridConfig gc;
    gc.resolution = 6;
    gc.num_lobes = 4;
    VisibilityGrid ga(gc), gb(gc);
    VisibilityFitConfig fc;
    fc.dirs_per_node = 24;
    fc.fit.refine_iters = 40;
    fc.parallel = false;
    const double ts = time_of([&] { fit_visibility_grid(neural.geometry, ga, fc); });
    fc.parallel = true;
    const double tp = time_of([&] { fit_visibility_grid(neural.geometry, gb, fc); });
    report("fit_visibility_grid", ts, tp, (ga.theta() - gb.theta()).cwiseAbs().maxCoeff());
  }

  return 0;
}
