#include "facade/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace facade {

namespace {

struct ColmapCamera {
  int width = 0, height = 0;
  real fx = 0, fy = 0, cx = 0, cy = 0;
};

std::map<int, ColmapCamera> read_cameras_txt(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("load_dataset: cannot open " + path.string());
  std::map<int, ColmapCamera> cams;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    int id;
    std::string model;
    ColmapCamera c;
    ss >> id >> model >> c.width >> c.height;
    if (model == "PINHOLE") {
      ss >> c.fx >> c.fy >> c.cx >> c.cy;
    } else if (model == "SIMPLE_PINHOLE") {
      ss >> c.fx >> c.cx >> c.cy;
      c.fy = c.fx;
    } else {
      throw DomainError("load_dataset: unsupported camera model " + model);
    }
    if (!ss) throw DomainError("load_dataset: malformed camera line: " + line);
    cams[id] = c;
  }
  return cams;
}

struct ColmapPose {
  Eigen::Quaterniond q;  // world-to-camera rotation
  Vec3 t;                // world-to-camera translation
  int camera_id = 0;
  std::string name;
};

std::vector<ColmapPose> read_images_txt(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("load_dataset: cannot open " + path.string());
  std::vector<ColmapPose> poses;
  std::string line;
  bool expect_points = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    if (expect_points) {  // 2D point observations (possibly empty), unused here
      expect_points = false;
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ss(line);
    int id;
    real qw, qx, qy, qz;
    ColmapPose p;
    ss >> id >> qw >> qx >> qy >> qz >> p.t.x() >> p.t.y() >> p.t.z() >> p.camera_id >> p.name;
    if (!ss) throw DomainError("load_dataset: malformed image line: " + line);
    p.q = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
    poses.push_back(p);
    expect_points = true;
  }
  return poses;
}

bool is_image_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".exr" || ext == ".EXR";
}

}  // namespace

void write_ply_points(const std::string& path, const std::vector<Vec3>& points) {
  std::ofstream out(path);
  if (!out) throw DomainError("write_ply_points: cannot open " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  out.precision(17);
  for (const auto& p : points) out << p.x() << " " << p.y() << " " << p.z() << "\n";
}

std::vector<Vec3> read_ply_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("read_ply_points: cannot open " + path);
  std::string line;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "element") {
      std::string kind;
      ss >> kind >> count;
      if (kind != "vertex") throw DomainError("read_ply_points: unexpected element " + kind);
    } else if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "ascii") throw DomainError("read_ply_points: only ascii ply supported");
    } else if (tok == "end_header") {
      break;
    }
  }
  std::vector<Vec3> pts(count);
  for (auto& p : pts) {
    in >> p.x() >> p.y() >> p.z();
    in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  }
  if (!in) throw DomainError("read_ply_points: truncated file " + path);
  return pts;
}

SceneDataset load_dataset(const std::string& path, const std::string& mask_dir) {
  const fs::path root(path);
  if (!fs::exists(root / "cameras.txt") || !fs::exists(root / "images.txt"))
    throw DomainError("load_dataset: " + path + " lacks cameras.txt/images.txt");

  const auto cams = read_cameras_txt(root / "cameras.txt");
  auto poses = read_images_txt(root / "images.txt");
  std::sort(poses.begin(), poses.end(),
            [](const ColmapPose& a, const ColmapPose& b) { return a.name < b.name; });

  // Every image file must have a pose entry.
  std::set<std::string> posed;
  for (const auto& p : poses) posed.insert(p.name);
  const fs::path img_dir = root / "images";
  if (fs::exists(img_dir)) {
    for (const auto& e : fs::directory_iterator(img_dir)) {
      if (is_image_file(e.path()) && !posed.count(e.path().filename().string()))
        throw DomainError("load_dataset: image without pose entry: " +
                          e.path().filename().string());
    }
  }

  json meta;
  if (fs::exists(root / "meta.json")) {
    std::ifstream in(root / "meta.json");
    in >> meta;
  }

  SceneDataset ds;
  const fs::path masks(mask_dir.empty() ? (root / "masks").string() : mask_dir);
  for (const auto& p : poses) {
    if (!cams.count(p.camera_id))
      throw DomainError("load_dataset: image " + p.name + " references unknown camera");
    const auto& cc = cams.at(p.camera_id);
    DatasetView v;
    v.name = p.name;
    v.camera.fx = cc.fx;
    v.camera.fy = cc.fy;
    v.camera.cx = cc.cx;
    v.camera.cy = cc.cy;
    v.camera.width = cc.width;
    v.camera.height = cc.height;
    const Mat3 r = p.q.toRotationMatrix();  // world-to-camera
    v.camera.cam_to_world.block<3, 3>(0, 0) = r.transpose();
    v.camera.cam_to_world.block<3, 1>(0, 3) = -r.transpose() * p.t;

    const fs::path img = img_dir / p.name;
    if (!fs::exists(img)) throw DomainError("load_dataset: missing image file " + p.name);
    v.image = read_exr(img.string());
    if (v.image.width != cc.width || v.image.height != cc.height)
      throw DomainError("load_dataset: size mismatch for " + p.name);

    const fs::path m = masks / (fs::path(p.name).stem().string() + ".png");
    if (fs::exists(m)) v.mask = read_mask_png(m.string());
    ds.views.push_back(std::move(v));
  }
  if (ds.views.empty()) throw DomainError("load_dataset: no views in " + path);

  if (fs::exists(root / "points3D.ply")) ds.points = read_ply_points((root / "points3D.ply").string());

  // Normalization: scene AABB mapped inside radius 0.8 around the origin.
  bool already = meta.value("normalized", false);
  if (already) {
    if (meta.contains("norm_center"))
      for (int j = 0; j < 3; ++j) ds.norm_center[j] = meta["norm_center"][j].get<real>();
    ds.norm_scale = meta.value("norm_scale", 1.0);
  } else {
    Vec3 lo = Vec3::Constant(1e30), hi = Vec3::Constant(-1e30);
    bool have_aabb = false;
    if (meta.contains("aabb")) {
      for (int j = 0; j < 3; ++j) {
        lo[j] = meta["aabb"][0][j].get<real>();
        hi[j] = meta["aabb"][1][j].get<real>();
      }
      have_aabb = true;
    } else if (!ds.points.empty()) {
      for (const auto& p : ds.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
      }
      have_aabb = true;
    }
    if (have_aabb) {
      ds.norm_center = 0.5 * (lo + hi);
      const real radius = 0.5 * (hi - lo).norm();
      ds.norm_scale = radius > 0.0 ? 0.8 / radius : 1.0;
    }
    for (auto& v : ds.views) {
      const Vec3 pos = v.camera.position();
      v.camera.cam_to_world.block<3, 1>(0, 3) = (pos - ds.norm_center) * ds.norm_scale;
    }
    for (auto& p : ds.points) p = (p - ds.norm_center) * ds.norm_scale;
  }

  if (meta.contains("eval_views")) {
    for (const auto& id : meta["eval_views"]) ds.eval_ids.push_back(id.get<int>());
  } else {
    const int n = static_cast<int>(ds.views.size());
    const int k = std::min(20, std::max(1, n / 5));
    for (int i = 0; i < k; ++i) ds.eval_ids.push_back(i * n / k);
  }
  std::set<int> ev(ds.eval_ids.begin(), ds.eval_ids.end());
  for (int i = 0; i < static_cast<int>(ds.views.size()); ++i)
    if (!ev.count(i)) ds.train_ids.push_back(i);
  return ds;
}

void save_dataset(const std::string& path, const SceneDataset& ds) {
  const fs::path root(path);
  fs::create_directories(root / "images");
  const bool any_mask =
      std::any_of(ds.views.begin(), ds.views.end(), [](const DatasetView& v) { return bool(v.mask); });
  if (any_mask) fs::create_directories(root / "masks");

  {
    std::ofstream out(root / "cameras.txt");
    out << "# CAMERA_ID MODEL WIDTH HEIGHT FX FY CX CY\n";
    out.precision(17);
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
      const auto& c = ds.views[i].camera;
      out << i + 1 << " PINHOLE " << c.width << " " << c.height << " " << c.fx << " " << c.fy
          << " " << c.cx << " " << c.cy << "\n";
    }
  }
  {
    std::ofstream out(root / "images.txt");
    out << "# IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME\n";
    out.precision(17);
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
      const auto& v = ds.views[i];
      const Mat3 r = v.camera.cam_to_world.block<3, 3>(0, 0).transpose();
      const Vec3 t = -r * v.camera.position();
      const Eigen::Quaterniond q(r);
      out << i + 1 << " " << q.w() << " " << q.x() << " " << q.y() << " " << q.z() << " "
          << t.x() << " " << t.y() << " " << t.z() << " " << i + 1 << " " << v.name << "\n\n";
    }
  }
  for (const auto& v : ds.views) {
    write_exr((root / "images" / v.name).string(), v.image);
    if (v.mask)
      write_mask_png((root / "masks" / (fs::path(v.name).stem().string() + ".png")).string(),
                     *v.mask);
  }
  if (!ds.points.empty()) write_ply_points((root / "points3D.ply").string(), ds.points);

  json meta;
  meta["normalized"] = true;
  meta["norm_center"] = {ds.norm_center.x(), ds.norm_center.y(), ds.norm_center.z()};
  meta["norm_scale"] = ds.norm_scale;
  meta["eval_views"] = ds.eval_ids;
  std::ofstream out(root / "meta.json");
  out << meta.dump(2) << "\n";
}

}  // namespace facade
