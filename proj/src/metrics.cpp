#include "facade/metrics.hpp"

#include <cstdint>
#include <unordered_map>

namespace facade {

namespace {

// Uniform hash grid over one point set; queried by expanding shells of cells
// until the best candidate cannot be beaten by anything farther out.
class PointGrid {
 public:
  explicit PointGrid(const std::vector<Vec3>& pts) : pts_(pts) {
    Vec3 lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    lo_ = lo;
    const real diag = (hi - lo).norm();
    const real target_cells = std::cbrt(static_cast<real>(pts.size()));
    cell_ = std::max(diag / std::max(target_cells, 1.0), 1e-12);
    for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(coord(pts[i]))].push_back(i);
  }

  real nearest_distance(const Vec3& q) const {
    const Eigen::Vector3i c = coord(q);
    real best = std::numeric_limits<real>::max();
    for (int ring = 0;; ++ring) {
      // Anything in ring r is at least (r-1)*cell away from q.
      if (best <= static_cast<real>(ring - 1) * cell_) break;
      for (int dx = -ring; dx <= ring; ++dx)
        for (int dy = -ring; dy <= ring; ++dy)
          for (int dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            const auto it = cells_.find(key(c + Eigen::Vector3i(dx, dy, dz)));
            if (it == cells_.end()) continue;
            for (const auto i : it->second) best = std::min(best, (pts_[i] - q).norm());
          }
      if (ring > 4096) break;  // degenerate fallback, finish by brute force
    }
    if (best == std::numeric_limits<real>::max()) {
      for (const auto& p : pts_) best = std::min(best, (p - q).norm());
    }
    return best;
  }

 private:
  Eigen::Vector3i coord(const Vec3& p) const {
    return Eigen::Vector3i(static_cast<int>(std::floor((p.x() - lo_.x()) / cell_)),
                           static_cast<int>(std::floor((p.y() - lo_.y()) / cell_)),
                           static_cast<int>(std::floor((p.z() - lo_.z()) / cell_)));
  }
  static std::uint64_t key(const Eigen::Vector3i& c) {
    const auto u = [](int v) { return static_cast<std::uint64_t>(v + (1 << 20)) & 0x1FFFFF; };
    return (u(c.x()) << 42) | (u(c.y()) << 21) | u(c.z());
  }

  const std::vector<Vec3>& pts_;
  Vec3 lo_ = Vec3::Zero();
  real cell_ = 1.0;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

real directed_mean(const std::vector<Vec3>& from, const PointGrid& to) {
  real sum = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : sum)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(from.size()); ++i)
    sum += to.nearest_distance(from[static_cast<std::size_t>(i)]);
  return sum / static_cast<real>(from.size());
}

}  // namespace

ChamferResult chamfer_distance(const std::vector<Vec3>& pred, const std::vector<Vec3>& ref) {
  if (pred.empty() || ref.empty()) throw DomainError("chamfer_distance: empty point set");
  const PointGrid pred_grid(pred);
  const PointGrid ref_grid(ref);
  ChamferResult r;
  r.pred_to_ref = directed_mean(pred, ref_grid);
  r.ref_to_pred = directed_mean(ref, pred_grid);
  r.mean = 0.5 * (r.pred_to_ref + r.ref_to_pred);
  return r;
}

PsnrResult psnr(const Image& a, const Image& b, const LabelImage* mask) {
  if (a.width != b.width || a.height != b.height)
    throw DomainError("psnr: image dimensions differ");
  if (mask && (mask->width != a.width || mask->height != a.height))
    throw DomainError("psnr: mask dimensions differ");
  real sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (mask && mask->at(x, y) < 0) continue;
      sum += (a.at(x, y) - b.at(x, y)).squaredNorm();
      ++count;
    }
  if (count == 0) throw DomainError("psnr: mask excludes every pixel");
  PsnrResult r;
  r.evaluated_pixels = count;
  const real mse = sum / (3.0 * static_cast<real>(count));
  if (mse == 0.0) {
    r.infinite = true;
    r.db = std::numeric_limits<real>::infinity();
  } else {
    r.db = 10.0 * std::log10(1.0 / mse);
  }
  return r;
}

}  // namespace facade
