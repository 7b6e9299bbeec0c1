#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "facade/math.hpp"

namespace facade {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;  // per vertex, area-weighted face average
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  // Edges not shared by exactly two triangles.
  int boundary_edge_count() const;
};

using ScalarField = std::function<real(const Vec3&)>;

// Marching cubes over the zero level set inside [lo, hi]^3 with `resolution`
// samples per axis. Vertices land on grid edges by secant interpolation of
// the two endpoint values. Degenerate triangles (area <= 1e-12) are dropped.
TriangleMesh extract_mesh(const ScalarField& field, int resolution, const Vec3& lo,
                          const Vec3& hi);

void write_ply_mesh(const std::string& path, const TriangleMesh& mesh);  // binary
TriangleMesh read_ply_mesh(const std::string& path);

// Uniform-by-area samples on the mesh surface.
std::vector<Vec3> sample_mesh_points(const TriangleMesh& mesh, int count, Rng& rng);

}  // namespace facade
