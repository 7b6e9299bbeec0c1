#pragma once

#include <optional>
#include <string>
#include <vector>

#include "facade/image.hpp"
#include "facade/renderer.hpp"

namespace facade {

struct DatasetView {
  std::string name;  // image file name, e.g. view_000.exr
  Camera camera;
  Image image;
  std::optional<LabelImage> mask;
};

// Posed multi-view dataset in the normalized convention: scene AABB inside
// radius 0.8, cameras outside the unit sphere.
struct SceneDataset {
  std::vector<DatasetView> views;
  std::vector<Vec3> points;  // optional reference point cloud, normalized
  std::vector<int> train_ids;
  std::vector<int> eval_ids;

  // world_normalized = (world_raw - norm_center) * norm_scale
  Vec3 norm_center = Vec3::Zero();
  real norm_scale = 1.0;

  const DatasetView& view(int id) const { return views.at(static_cast<std::size_t>(id)); }
};

// Loads a directory containing cameras.txt / images.txt (COLMAP text
// convention, PINHOLE model), an images/ folder, and optionally masks/,
// points3D.ply, meta.json. Poses are normalized on load. mask_dir overrides
// the default masks/ location.
SceneDataset load_dataset(const std::string& path, const std::string& mask_dir = "");

// Writes the dataset back out in the same layout (poses are stored raw; the
// normalization transform goes to meta.json so a reload reproduces the same
// normalized dataset).
void save_dataset(const std::string& path, const SceneDataset& ds);

// ASCII PLY point cloud io.
void write_ply_points(const std::string& path, const std::vector<Vec3>& points);
std::vector<Vec3> read_ply_points(const std::string& path);

}  // namespace facade
