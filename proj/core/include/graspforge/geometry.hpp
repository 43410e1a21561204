#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "graspforge/vec.hpp"

namespace gf {

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  void validate() const;  // N >= 1, all finite
  Vec3 centroid() const;
};

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  void validate() const;  // index bounds, no degenerate faces, finite coords
  Aabb bounds() const;
  double face_area(int f) const;
  double surface_area() const;
  /// Signed volume by the divergence theorem; meaningful for closed meshes,
  /// positive when faces are oriented outward.
  double signed_volume() const;
  Vec3 vertex_centroid() const;
};

/// Closed orientable surface check: every directed edge appears exactly once
/// and is paired with its reverse. Holds for disjoint unions of closed
/// components, which is how compound objects are represented here.
bool is_watertight(const TriMesh& mesh);

struct VoxelGrid {
  Vec3 origin;        // corner of voxel (0,0,0)
  double resolution;  // cube edge length, meters
  int nx = 0, ny = 0, nz = 0;
  std::vector<std::uint8_t> occupancy;  // x-fastest layout

  std::size_t index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(iz) * ny + iy) * nx + ix;
  }
  bool occupied(int ix, int iy, int iz) const { return occupancy[index(ix, iy, iz)] != 0; }
  Vec3 center(int ix, int iy, int iz) const {
    return origin + Vec3{(ix + 0.5) * resolution, (iy + 0.5) * resolution, (iz + 0.5) * resolution};
  }
  std::int64_t occupied_count() const;
};

// ---------------------------------------------------------------------------
// Nearest-neighbor acceleration: uniform spatial hash over cells, exact
// expanding-ring search, brute force below 64 points.
// ---------------------------------------------------------------------------
class PointGrid {
 public:
  explicit PointGrid(const std::vector<Vec3>& points);

  /// Index and squared distance of the nearest stored point. Exact.
  std::pair<int, double> nearest(const Vec3& q) const;

  std::size_t size() const { return points_.size(); }

 private:
  std::vector<Vec3> points_;
  bool brute_ = true;
  double cell_ = 1.0;
  Vec3 grid_origin_{};
  int gx_ = 0, gy_ = 0, gz_ = 0;
  std::vector<int> cell_start_;  // CSR layout over flattened cells
  std::vector<int> cell_items_;

  int cell_of(double v, double origin) const;
};

// ---------------------------------------------------------------------------
// Triangle-mesh acceleration structure: closest point queries plus
// generalized winding numbers (exact solid angles near the query, first-order
// dipole far field). Inside/outside via winding >= 1/2.
// ---------------------------------------------------------------------------
class MeshBvh {
 public:
  explicit MeshBvh(const TriMesh& mesh);

  struct Closest {
    double dist2 = 0.0;
    Vec3 point{};
    int face = -1;
  };

  Closest closest_point(const Vec3& q) const;
  double unsigned_distance(const Vec3& q) const;

  /// Generalized winding number of q with respect to the surface.
  double winding_number(const Vec3& q) const;
  /// Interior test; |w| >= 1/2 so inward-oriented closed meshes still work.
  bool inside(const Vec3& q) const { return std::abs(winding_number(q)) >= 0.5; }

  /// Distance with sign, negative inside. Requires a watertight mesh.
  double signed_distance(const Vec3& q) const;

  bool watertight() const { return watertight_; }
  const Aabb& bounds() const { return root_bounds_; }
  const TriMesh& mesh() const { return mesh_; }

 private:
  struct Node {
    Aabb box;
    // dipole far-field data
    Vec3 area_normal{};  // sum of area-weighted face normals
    Vec3 centroid{};     // area-weighted centroid
    double radius = 0.0; // max distance from centroid to any node vertex
    int left = -1, right = -1;  // internal
    int first = 0, count = 0;   // leaf: range into order_
  };

  TriMesh mesh_;
  bool watertight_ = false;
  Aabb root_bounds_;
  std::vector<Node> nodes_;
  std::vector<int> order_;

  int build(std::vector<int>& faces, int first, int count);
  double winding_rec(int node, const Vec3& q) const;
  void closest_rec(int node, const Vec3& q, Closest& best) const;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// n points drawn area-uniformly from the surface, deterministic per seed.
PointCloud sample_surface(const TriMesh& mesh, int n, std::uint64_t seed);

/// Symmetric chamfer distance: mean squared nearest-neighbor distance in both
/// directions. Units m^2.
double chamfer(const PointCloud& a, const PointCloud& b);

/// Distance from p to the mesh surface, negative inside (winding >= 1/2).
/// Throws for non-watertight meshes unless the unsigned variant is requested.
double signed_distance(const TriMesh& mesh, const Vec3& p);
double unsigned_distance(const TriMesh& mesh, const Vec3& p);

/// Occupancy by voxel-center containment; grid covers the mesh bounding box
/// padded by one voxel on every side.
VoxelGrid voxelize_solid(const TriMesh& mesh, double resolution);
VoxelGrid voxelize_solid(const MeshBvh& bvh, double resolution);

/// Shared-grid overlap volume of two watertight meshes, reported in cm^3.
double intersection_volume_cm3(const TriMesh& a, const TriMesh& b, double resolution);
double intersection_volume_cm3(const MeshBvh& a, const MeshBvh& b, double resolution);

}  // namespace gf
