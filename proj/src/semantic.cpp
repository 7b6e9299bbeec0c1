#include "facade/semantic.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace facade {

std::vector<int> hungarian(const MatX& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
  const int n = std::max(rows, cols);

  // Pad to square with cost 1 (the maximum of an overlap-based cost).
  MatX a = MatX::Ones(n, n);
  a.block(0, 0, rows, cols) = cost;

  // Potentials-based O(n^3) assignment, 1-indexed internally.
  std::vector<real> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<real> minv(n + 1, std::numeric_limits<real>::infinity());
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      real delta = std::numeric_limits<real>::infinity();
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const real cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> assignment(rows, -1);
  for (int j = 1; j <= n; ++j) {
    const int i = p[j];
    if (i >= 1 && i <= rows && j <= cols) assignment[i - 1] = j - 1;
  }
  return assignment;
}

std::vector<int> match_instances(const MatX& cost, const MatchOptions& opts) {
  if (cost.size() > 0 && (cost.minCoeff() < 0.0 || cost.maxCoeff() > 1.0))
    throw DomainError("match_instances: costs must lie in [0, 1]");
  std::vector<int> assignment = hungarian(cost);
  for (int i = 0; i < static_cast<int>(assignment.size()); ++i) {
    if (assignment[i] < 0) continue;
    const real overlap = 1.0 - cost(i, assignment[i]);
    if (overlap < opts.overlap_threshold) assignment[i] = -1;
  }
  return assignment;
}

namespace {

KMeansResult kmeans_single_run(const std::vector<VecX>& values, int k, Rng& rng) {
  const int n = static_cast<int>(values.size());

  // k-means++ seeding.
  KMeansResult res;
  res.centers.reserve(k);
  res.centers.push_back(values[static_cast<std::size_t>(uniform(rng) * n) % n]);
  std::vector<real> d2(n);
  while (static_cast<int>(res.centers.size()) < k) {
    real total = 0.0;
    for (int i = 0; i < n; ++i) {
      real best = std::numeric_limits<real>::infinity();
      for (const auto& c : res.centers) best = std::min(best, (values[i] - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    int pick = 0;
    if (total > 0.0) {
      real target = uniform(rng) * total;
      for (; pick < n - 1; ++pick) {
        target -= d2[pick];
        if (target <= 0.0) break;
      }
    } else {
      pick = static_cast<int>(uniform(rng) * n) % n;
    }
    res.centers.push_back(values[pick]);
  }

  res.labels.assign(n, 0);
  real prev_inertia = std::numeric_limits<real>::infinity();
  for (int iter = 0; iter < 100; ++iter) {
    real inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      real best = std::numeric_limits<real>::infinity();
      for (int c = 0; c < k; ++c) {
        const real d = (values[i] - res.centers[c]).squaredNorm();
        if (d < best) {
          best = d;
          res.labels[i] = c;
        }
      }
      inertia += best;
    }
    if (inertia > prev_inertia + 1e-12)
      throw DomainError("kmeans_cluster: inertia increased");
    res.inertia = inertia;

    std::vector<VecX> sums(k, VecX::Zero(values[0].size()));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums[res.labels[i]] += values[i];
      ++counts[res.labels[i]];
    }
    real shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      const VecX nc = sums[c] / counts[c];
      shift = std::max(shift, (nc - res.centers[c]).norm());
      res.centers[c] = nc;
    }
    prev_inertia = inertia;
    if (shift < 1e-6) break;
  }
  return res;
}

}  // namespace

namespace {

// Exhaustive search over all labelings; only viable for tiny inputs.
KMeansResult kmeans_exact(const std::vector<VecX>& values, int k) {
  const int n = static_cast<int>(values.size());
  KMeansResult best;
  best.inertia = std::numeric_limits<real>::infinity();
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  while (true) {
    std::vector<VecX> sums(static_cast<std::size_t>(k), VecX::Zero(values[0].size()));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      sums[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] +=
          values[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    bool full = true;
    for (int c = 0; c < k; ++c) full = full && counts[static_cast<std::size_t>(c)] > 0;
    if (full) {
      real inertia = 0.0;
      for (int i = 0; i < n; ++i) {
        const int c = labels[static_cast<std::size_t>(i)];
        const VecX center = sums[static_cast<std::size_t>(c)] / counts[static_cast<std::size_t>(c)];
        inertia += (values[static_cast<std::size_t>(i)] - center).squaredNorm();
      }
      if (inertia < best.inertia) {
        best.inertia = inertia;
        best.labels = labels;
        best.centers.clear();
        for (int c = 0; c < k; ++c)
          best.centers.push_back(sums[static_cast<std::size_t>(c)] /
                                 counts[static_cast<std::size_t>(c)]);
      }
    }
    int pos = 0;
    while (pos < n && labels[static_cast<std::size_t>(pos)] == k - 1)
      labels[static_cast<std::size_t>(pos++)] = 0;
    if (pos == n) break;
    ++labels[static_cast<std::size_t>(pos)];
  }
  return best;
}

}  // namespace

KMeansResult kmeans_cluster(const std::vector<VecX>& values, int k, Rng& rng) {
  const int n = static_cast<int>(values.size());
  if (k < 1) throw DomainError("kmeans_cluster: k must be >= 1");
  if (n < k) throw DomainError("kmeans_cluster: more clusters than samples");

  // Tiny problems admit the global optimum by enumeration.
  real combos = 1.0;
  for (int i = 0; i < n; ++i) combos *= k;
  if (combos <= 4096.0) return kmeans_exact(values, k);

  // Otherwise Lloyd with restarts; keep the lowest inertia.
  KMeansResult best = kmeans_single_run(values, k, rng);
  for (int run = 1; run < 10; ++run) {
    if (best.inertia <= 0.0) break;
    KMeansResult cand = kmeans_single_run(values, k, rng);
    if (cand.inertia < best.inertia) best = cand;
  }
  return best;
}

std::optional<real> silhouette_score(const std::vector<VecX>& values,
                                     const std::vector<int>& labels) {
  const int n = static_cast<int>(values.size());
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) return std::nullopt;

  std::map<int, int> counts;
  for (int l : labels) ++counts[l];

  real total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (counts[labels[i]] <= 1) continue;  // singleton scores 0
    std::map<int, real> mean_dist;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      mean_dist[labels[j]] += (values[i] - values[j]).norm();
    }
    real a = mean_dist[labels[i]] / (counts[labels[i]] - 1);
    real b = std::numeric_limits<real>::infinity();
    for (const auto& [l, sum] : mean_dist) {
      if (l == labels[i]) continue;
      b = std::min(b, sum / counts[l]);
    }
    const real denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / n;
}

int update_cluster_count(const std::vector<VecX>& values, int current_k, Rng& rng,
                         SilhouetteCriterion criterion) {
  if (current_k < 1) throw DomainError("update_cluster_count: K must be >= 1");
  const int n = static_cast<int>(values.size());
  int best_k = current_k;
  std::optional<real> best_score;
  for (int k : {current_k - 1, current_k, current_k + 1}) {
    if (k < 1 || k > n) continue;
    const KMeansResult km = kmeans_cluster(values, k, rng);
    const auto score = silhouette_score(values, km.labels);
    if (!score) continue;
    const bool better =
        !best_score ||
        (criterion == SilhouetteCriterion::Minimize ? *score < *best_score
                                                    : *score > *best_score) ||
        // Ties keep the current K.
        (*score == *best_score && k == current_k);
    if (better) {
      best_score = score;
      best_k = k;
    }
  }
  return best_k;
}

real sam_loss(const std::vector<VecX>& values, const std::vector<VecX>& centers,
              std::vector<VecX>* d_values) {
  if (centers.empty()) throw DomainError("sam_loss: no centers");
  if (d_values) d_values->assign(values.size(), VecX());
  real loss = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    int best = 0;
    real best_d = std::numeric_limits<real>::infinity();
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const real d = (values[i] - centers[c]).template lpNorm<1>();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    loss += best_d;
    if (d_values) {
      VecX g = VecX::Zero(values[i].size());
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        const real diff = values[i][j] - centers[best][j];
        g[j] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      }
      (*d_values)[i] = g;
    }
  }
  return loss;
}

std::vector<ProjectedPixel> project_instance(const std::vector<std::pair<int, int>>& pixels,
                                             const ScalarImage& depth_j1,
                                             const Camera& cam_j1, const Camera& cam_j2,
                                             const ScalarImage& depth_j2,
                                             const ProjectionOptions& opts) {
  std::vector<ProjectedPixel> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto [px, py] = pixels[i];
    const real t = depth_j1.at(px, py);
    if (t <= 0.0) continue;
    const Ray ray = cam_j1.generate_ray(px + 0.5, py + 0.5);
    const Vec3 p = ray.origin + t * ray.dir;
    real u, v, depth_cam;
    if (!cam_j2.project(p, &u, &v, &depth_cam)) continue;
    out[i].u = u;
    out[i].v = v;
    const int iu = static_cast<int>(u);
    const int iv = static_cast<int>(v);
    if (iu < 0 || iv < 0 || iu >= depth_j2.width || iv >= depth_j2.height) continue;
    // Depth consistency: distance from cam2 to the point vs the rendered
    // ray depth of view 2 (occluded pixels fail this test).
    const real t2 = (p - cam_j2.position()).norm();
    const real t2_rendered = depth_j2.at(iu, iv);
    if (t2_rendered > 0.0 && std::abs(t2 - t2_rendered) > opts.depth_tolerance) continue;
    out[i].valid = true;
  }
  return out;
}

MatX instance_overlap(const LabelImage& mask_j1, const ScalarImage& depth_j1,
                      const Camera& cam_j1, const LabelImage& mask_j2,
                      const ScalarImage& depth_j2, const Camera& cam_j2,
                      const ProjectionOptions& opts) {
  int n1 = 0, n2 = 0;
  for (int l : mask_j1.labels) n1 = std::max(n1, l + 1);
  for (int l : mask_j2.labels) n2 = std::max(n2, l + 1);
  MatX counts = MatX::Zero(n1, n2);
  VecX valid = VecX::Zero(n1);

  std::vector<std::vector<std::pair<int, int>>> by_label(n1);
  for (int y = 0; y < mask_j1.height; ++y)
    for (int x = 0; x < mask_j1.width; ++x) {
      const int l = mask_j1.at(x, y);
      if (l >= 0) by_label[l].emplace_back(x, y);
    }

  for (int l = 0; l < n1; ++l) {
    const auto projected =
        project_instance(by_label[l], depth_j1, cam_j1, cam_j2, depth_j2, opts);
    for (const auto& p : projected) {
      if (!p.valid) continue;
      valid[l] += 1.0;
      const int iu = static_cast<int>(p.u);
      const int iv = static_cast<int>(p.v);
      const int l2 = mask_j2.at(iu, iv);
      if (l2 >= 0) counts(l, l2) += 1.0;
    }
  }
  for (int l = 0; l < n1; ++l)
    if (valid[l] > 0.0) counts.row(l) /= valid[l];
  return counts;  // overlap fractions
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

int InstanceCorrespondence::global_id(int view, int local_label) const {
  for (const auto& r : records_)
    if (r.view == view && r.local_label == local_label) return r.global_id;
  return -1;
}

InstanceCorrespondence InstanceCorrespondence::build(const std::vector<LabelImage>& masks,
                                                     const std::vector<ScalarImage>& depths,
                                                     const std::vector<Camera>& cameras,
                                                     const MatchOptions& match_opts,
                                                     const ProjectionOptions& proj_opts) {
  const int views = static_cast<int>(masks.size());
  std::vector<int> label_count(views, 0);
  std::vector<int> offset(views, 0);
  int total = 0;
  for (int j = 0; j < views; ++j) {
    for (int l : masks[j].labels) label_count[j] = std::max(label_count[j], l + 1);
    offset[j] = total;
    total += label_count[j];
  }

  UnionFind uf(total);
  std::map<int, real> confidence;  // flat id -> best supporting overlap
  for (int j = 0; j + 1 < views; ++j) {
    const MatX overlap = instance_overlap(masks[j], depths[j], cameras[j], masks[j + 1],
                                          depths[j + 1], cameras[j + 1], proj_opts);
    if (overlap.size() == 0) continue;
    const MatX cost = MatX::Ones(overlap.rows(), overlap.cols()) - overlap;
    const std::vector<int> assignment = match_instances(cost, match_opts);
    for (int l = 0; l < static_cast<int>(assignment.size()); ++l) {
      if (assignment[l] < 0) continue;
      uf.unite(offset[j] + l, offset[j + 1] + assignment[l]);
      const real ov = overlap(l, assignment[l]);
      auto& c1 = confidence[offset[j] + l];
      auto& c2 = confidence[offset[j + 1] + assignment[l]];
      c1 = std::max(c1, ov);
      c2 = std::max(c2, ov);
    }
  }

  InstanceCorrespondence out;
  std::map<int, int> root_to_global;
  for (int j = 0; j < views; ++j)
    for (int l = 0; l < label_count[j]; ++l) {
      const int root = uf.find(offset[j] + l);
      auto [it, inserted] = root_to_global.emplace(root, out.num_global_);
      if (inserted) ++out.num_global_;
      CorrespondenceRecord rec;
      rec.global_id = it->second;
      rec.view = j;
      rec.local_label = l;
      const auto ci = confidence.find(offset[j] + l);
      rec.confidence = ci == confidence.end() ? 0.0 : ci->second;
      out.records_.push_back(rec);
    }
  return out;
}

void InstanceCorrespondence::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw DomainError("InstanceCorrespondence::save failed: " + path);
  for (const auto& r : records_)
    f << r.global_id << ' ' << r.view << ' ' << r.local_label << ' ' << r.confidence << '\n';
}

InstanceCorrespondence InstanceCorrespondence::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DomainError("InstanceCorrespondence::load failed: " + path);
  InstanceCorrespondence out;
  CorrespondenceRecord r;
  while (f >> r.global_id >> r.view >> r.local_label >> r.confidence) {
    out.records_.push_back(r);
    out.num_global_ = std::max(out.num_global_, r.global_id + 1);
  }
  return out;
}

}  // namespace facade
