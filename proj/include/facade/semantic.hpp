#pragma once

#include <optional>
#include <string>
#include <vector>

#include "facade/image.hpp"
#include "facade/renderer.hpp"

namespace facade {

// Optimal one-to-one assignment (rows to columns) minimizing total cost.
// Rectangular matrices are padded internally with cost 1. Returns, per row,
// the assigned column or -1.
std::vector<int> hungarian(const MatX& cost);

struct MatchOptions {
  real overlap_threshold = 0.3;  // tau_o: pairs below this overlap stay unmatched
};

// Assignment over a (1 - overlap) cost matrix with threshold filtering.
std::vector<int> match_instances(const MatX& cost, const MatchOptions& opts = {});

struct KMeansResult {
  std::vector<VecX> centers;
  std::vector<int> labels;
  real inertia = 0.0;
};

// Lloyd iterations with k-means++ seeding; every center equals the mean of
// its members on return.
KMeansResult kmeans_cluster(const std::vector<VecX>& values, int k, Rng& rng);

// Mean silhouette coefficient; nullopt when fewer than 2 clusters are
// present (the K update skips such candidates).
std::optional<real> silhouette_score(const std::vector<VecX>& values,
                                     const std::vector<int>& labels);

enum class SilhouetteCriterion {
  Minimize,  // paper-literal reading
  Maximize,  // conventional reading, behind a flag
};

// Evaluates candidates {K-1, K, K+1} and returns the winner. Ties keep the
// current K.
int update_cluster_count(const std::vector<VecX>& values, int current_k, Rng& rng,
                         SilhouetteCriterion criterion = SilhouetteCriterion::Minimize);

// L1 pull of property samples toward their nearest cluster center; centers
// are constants. d_values, when given, receives the per-sample gradient.
real sam_loss(const std::vector<VecX>& values, const std::vector<VecX>& centers,
              std::vector<VecX>* d_values = nullptr);

struct ProjectedPixel {
  real u = 0.0, v = 0.0;
  bool valid = false;
};

struct ProjectionOptions {
  real depth_tolerance = 0.01;  // tau_d, in scene units
};

// Unprojects pixels of view j1 via their ray depth (distance along the ray)
// and reprojects into view j2. Pixels out of frame or failing the depth
// consistency test against j2's rendered depth map are flagged invalid.
std::vector<ProjectedPixel> project_instance(const std::vector<std::pair<int, int>>& pixels,
                                             const ScalarImage& depth_j1,
                                             const Camera& cam_j1, const Camera& cam_j2,
                                             const ScalarImage& depth_j2,
                                             const ProjectionOptions& opts = {});

// Overlap fractions between instances of two views:
// overlap(l, l') = |valid projected pixels of l landing on l'| /
//                  |valid projected pixels of l|.
MatX instance_overlap(const LabelImage& mask_j1, const ScalarImage& depth_j1,
                      const Camera& cam_j1, const LabelImage& mask_j2,
                      const ScalarImage& depth_j2, const Camera& cam_j2,
                      const ProjectionOptions& opts = {});

struct CorrespondenceRecord {
  int global_id = -1;
  int view = -1;
  int local_label = -1;
  real confidence = 0.0;
};

// Global instance identities built by matching consecutive view pairs and
// merging with union-find.
class InstanceCorrespondence {
 public:
  int global_id(int view, int local_label) const;
  int num_global() const { return num_global_; }
  const std::vector<CorrespondenceRecord>& records() const { return records_; }

  static InstanceCorrespondence build(const std::vector<LabelImage>& masks,
                                      const std::vector<ScalarImage>& depths,
                                      const std::vector<Camera>& cameras,
                                      const MatchOptions& match_opts = {},
                                      const ProjectionOptions& proj_opts = {});

  void save(const std::string& path) const;
  static InstanceCorrespondence load(const std::string& path);

 private:
  std::vector<CorrespondenceRecord> records_;
  int num_global_ = 0;
};

}  // namespace facade
