#include "facade/mesh.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace facade {

namespace {

#include "marching_cubes_table.inc"

// Cube corner offsets and the 12 edges joining them.
const int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                           {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
const int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                          {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

int TriangleMesh::boundary_edge_count() const {
  std::map<std::pair<int, int>, int> uses;
  for (const auto& t : triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t[static_cast<std::size_t>(e)];
      const int b = t[static_cast<std::size_t>((e + 1) % 3)];
      ++uses[{std::min(a, b), std::max(a, b)}];
    }
  int bad = 0;
  for (const auto& [k, n] : uses)
    if (n != 2) ++bad;
  return bad;
}

TriangleMesh extract_mesh(const ScalarField& field, int resolution, const Vec3& lo,
                          const Vec3& hi) {
  if (resolution < 2) throw DomainError("extract_mesh: resolution must be >= 2");
  const int n = resolution;
  const Vec3 step = (hi - lo) / static_cast<real>(n - 1);

  std::vector<real> vals(static_cast<std::size_t>(n) * n * n);
  auto vidx = [n](int i, int j, int k) {
    return (static_cast<std::size_t>(i) * n + j) * n + k;
  };
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        vals[vidx(i, j, k)] =
            field(lo + Vec3(i * step.x(), j * step.y(), k * step.z()));

  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  auto node_id = [&](int i, int j, int k) {
    return static_cast<std::uint64_t>(vidx(i, j, k));
  };

  for (int i = 0; i + 1 < n; ++i)
    for (int j = 0; j + 1 < n; ++j)
      for (int k = 0; k + 1 < n; ++k) {
        real s[8];
        int cfg = 0;
        for (int c = 0; c < 8; ++c) {
          s[c] = vals[vidx(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2])];
          if (s[c] < 0.0) cfg |= 1 << c;
        }
        const int* tri = kTriTable[cfg];
        for (int t = 0; t < 16 && tri[t] >= 0; t += 3) {
          std::array<int, 3> ids;
          for (int v = 0; v < 3; ++v) {
            const int e = tri[t + v];
            const int c0 = kEdge[e][0], c1 = kEdge[e][1];
            std::uint64_t a = node_id(i + kCorner[c0][0], j + kCorner[c0][1], k + kCorner[c0][2]);
            std::uint64_t b = node_id(i + kCorner[c1][0], j + kCorner[c1][1], k + kCorner[c1][2]);
            real s0 = s[c0], s1 = s[c1];
            if (a > b) {
              std::swap(a, b);
              std::swap(s0, s1);
            }
            const std::uint64_t key = (a << 32) | b;
            auto it = edge_vertex.find(key);
            if (it == edge_vertex.end()) {
              const real tt = s0 / (s0 - s1);  // secant zero along the edge
              const Vec3 pa = lo + Vec3((a / (static_cast<std::uint64_t>(n) * n)) * step.x(),
                                        ((a / n) % n) * step.y(), (a % n) * step.z());
              const Vec3 pb = lo + Vec3((b / (static_cast<std::uint64_t>(n) * n)) * step.x(),
                                        ((b / n) % n) * step.y(), (b % n) * step.z());
              it = edge_vertex.emplace(key, static_cast<int>(mesh.vertices.size())).first;
              mesh.vertices.push_back(pa + tt * (pb - pa));
            }
            ids[static_cast<std::size_t>(v)] = it->second;
          }
          const Vec3& p0 = mesh.vertices[static_cast<std::size_t>(ids[0])];
          const Vec3& p1 = mesh.vertices[static_cast<std::size_t>(ids[1])];
          const Vec3& p2 = mesh.vertices[static_cast<std::size_t>(ids[2])];
          if (0.5 * (p1 - p0).cross(p2 - p0).norm() > 1e-12) mesh.triangles.push_back(ids);
        }
      }

  mesh.normals.assign(mesh.vertices.size(), Vec3::Zero());
  for (const auto& t : mesh.triangles) {
    const Vec3 fn = (mesh.vertices[static_cast<std::size_t>(t[1])] -
                     mesh.vertices[static_cast<std::size_t>(t[0])])
                        .cross(mesh.vertices[static_cast<std::size_t>(t[2])] -
                               mesh.vertices[static_cast<std::size_t>(t[0])]);
    for (int v = 0; v < 3; ++v) mesh.normals[static_cast<std::size_t>(t[static_cast<std::size_t>(v)])] += fn;
  }
  for (auto& nrm : mesh.normals) {
    const real len = nrm.norm();
    if (len > 1e-14) nrm /= len;
  }
  return mesh;
}

void write_ply_mesh(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("write_ply_mesh: cannot open " + path);
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << mesh.vertices.size()
      << "\nproperty float x\nproperty float y\nproperty float z"
      << "\nproperty float nx\nproperty float ny\nproperty float nz"
      << "\nelement face " << mesh.triangles.size()
      << "\nproperty list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    float buf[6];
    for (int j = 0; j < 3; ++j) {
      buf[j] = static_cast<float>(mesh.vertices[i][j]);
      buf[3 + j] = static_cast<float>(i < mesh.normals.size() ? mesh.normals[i][j] : 0.0);
    }
    out.write(reinterpret_cast<const char*>(buf), sizeof(buf));
  }
  for (const auto& t : mesh.triangles) {
    const unsigned char c = 3;
    out.write(reinterpret_cast<const char*>(&c), 1);
    std::int32_t idx[3] = {t[0], t[1], t[2]};
    out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
  }
}

TriangleMesh read_ply_mesh(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("read_ply_mesh: cannot open " + path);
  std::string line;
  std::size_t nv = 0, nf = 0;
  int vprops = 0;
  bool in_vertex = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "binary_little_endian")
        throw DomainError("read_ply_mesh: unsupported format " + fmt);
    } else if (tok == "element") {
      std::string kind;
      ss >> kind;
      in_vertex = kind == "vertex";
      ss >> (in_vertex ? nv : nf);
    } else if (tok == "property" && in_vertex) {
      ++vprops;
    } else if (tok == "end_header") {
      break;
    }
  }
  TriangleMesh mesh;
  mesh.vertices.resize(nv);
  mesh.normals.assign(nv, Vec3::Zero());
  std::vector<float> buf(static_cast<std::size_t>(vprops));
  for (std::size_t i = 0; i < nv; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    for (int j = 0; j < 3; ++j) mesh.vertices[i][j] = buf[static_cast<std::size_t>(j)];
    if (vprops >= 6)
      for (int j = 0; j < 3; ++j) mesh.normals[i][j] = buf[static_cast<std::size_t>(3 + j)];
  }
  mesh.triangles.resize(nf);
  for (auto& t : mesh.triangles) {
    unsigned char c = 0;
    in.read(reinterpret_cast<char*>(&c), 1);
    if (c != 3) throw DomainError("read_ply_mesh: non-triangle face");
    std::int32_t idx[3];
    in.read(reinterpret_cast<char*>(idx), sizeof(idx));
    t = {idx[0], idx[1], idx[2]};
  }
  if (!in) throw DomainError("read_ply_mesh: truncated file " + path);
  return mesh;
}

std::vector<Vec3> sample_mesh_points(const TriangleMesh& mesh, int count, Rng& rng) {
  if (mesh.triangles.empty()) throw DomainError("sample_mesh_points: empty mesh");
  std::vector<real> cum(mesh.triangles.size());
  real total = 0.0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    total += 0.5 * (mesh.vertices[static_cast<std::size_t>(t[1])] -
                    mesh.vertices[static_cast<std::size_t>(t[0])])
                       .cross(mesh.vertices[static_cast<std::size_t>(t[2])] -
                              mesh.vertices[static_cast<std::size_t>(t[0])])
                       .norm();
    cum[i] = total;
  }
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    const real u = uniform(rng) * total;
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    const auto& t = mesh.triangles[static_cast<std::size_t>(it - cum.begin())];
    real a = uniform(rng), b = uniform(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    pts.push_back(mesh.vertices[static_cast<std::size_t>(t[0])] +
                  a * (mesh.vertices[static_cast<std::size_t>(t[1])] -
                       mesh.vertices[static_cast<std::size_t>(t[0])]) +
                  b * (mesh.vertices[static_cast<std::size_t>(t[2])] -
                       mesh.vertices[static_cast<std::size_t>(t[0])]));
  }
  return pts;
}

}  // namespace facade
