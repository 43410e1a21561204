#include "graspforge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "graspforge/rng.hpp"

namespace gf {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDipoleBeta = 2.0;  // far-field threshold multiplier
}  // namespace

// ---------------------------------------------------------------------------
// PointCloud / TriMesh / VoxelGrid
// ---------------------------------------------------------------------------

void PointCloud::validate() const {
  if (points.empty()) throw std::invalid_argument("point cloud is empty");
  for (const Vec3& p : points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw std::invalid_argument("point cloud contains non-finite coordinates");
}

Vec3 PointCloud::centroid() const {
  Vec3 c{};
  for (const Vec3& p : points) c += p;
  return c / static_cast<double>(points.size());
}

void TriMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (const Vec3& v : vertices)
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
      throw std::invalid_argument("mesh has non-finite vertex");
  for (const auto& f : faces) {
    for (int k = 0; k < 3; ++k)
      if (f[k] < 0 || f[k] >= n) throw std::invalid_argument("face index out of range");
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      throw std::invalid_argument("degenerate face (repeated vertex index)");
  }
}

Aabb TriMesh::bounds() const {
  Aabb b;
  for (const Vec3& v : vertices) b.expand(v);
  return b;
}

double TriMesh::face_area(int f) const {
  const auto& t = faces[f];
  Vec3 e1 = vertices[t[1]] - vertices[t[0]];
  Vec3 e2 = vertices[t[2]] - vertices[t[0]];
  return 0.5 * norm(cross(e1, e2));
}

double TriMesh::surface_area() const {
  double a = 0.0;
  for (int f = 0; f < static_cast<int>(faces.size()); ++f) a += face_area(f);
  return a;
}

double TriMesh::signed_volume() const {
  double v = 0.0;
  for (const auto& t : faces) {
    const Vec3& a = vertices[t[0]];
    const Vec3& b = vertices[t[1]];
    const Vec3& c = vertices[t[2]];
    v += dot(a, cross(b, c));
  }
  return v / 6.0;
}

Vec3 TriMesh::vertex_centroid() const {
  Vec3 c{};
  for (const Vec3& v : vertices) c += v;
  return vertices.empty() ? c : c / static_cast<double>(vertices.size());
}

bool is_watertight(const TriMesh& mesh) {
  if (mesh.faces.empty()) return false;
  auto key = [](int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
  };
  std::unordered_map<std::uint64_t, int> edges;
  edges.reserve(mesh.faces.size() * 3);
  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      int a = f[k], b = f[(k + 1) % 3];
      if (++edges[key(a, b)] > 1) return false;  // directed edge reused
    }
  }
  for (const auto& [k, c] : edges) {
    (void)c;
    int a = static_cast<int>(k >> 32);
    int b = static_cast<int>(k & 0xffffffffu);
    if (edges.find(key(b, a)) == edges.end()) return false;  // boundary edge
  }
  return true;
}

std::int64_t VoxelGrid::occupied_count() const {
  std::int64_t n = 0;
  for (std::uint8_t v : occupancy) n += (v != 0);
  return n;
}

// ---------------------------------------------------------------------------
// PointGrid
// ---------------------------------------------------------------------------

PointGrid::PointGrid(const std::vector<Vec3>& points) : points_(points) {
  if (points_.empty()) throw std::invalid_argument("point cloud is empty");
  if (points_.size() < 64) return;  // brute force for small clouds

  Aabb box;
  for (const Vec3& p : points_) box.expand(p);
  Vec3 ext = box.extent();
  double vol = std::max(ext.x, 1e-12) * std::max(ext.y, 1e-12) * std::max(ext.z, 1e-12);
  cell_ = std::max(1e-9, std::cbrt(vol / static_cast<double>(points_.size())));
  grid_origin_ = box.lo;
  gx_ = std::max(1, static_cast<int>(std::floor(ext.x / cell_)) + 1);
  gy_ = std::max(1, static_cast<int>(std::floor(ext.y / cell_)) + 1);
  gz_ = std::max(1, static_cast<int>(std::floor(ext.z / cell_)) + 1);

  const std::size_t ncells = static_cast<std::size_t>(gx_) * gy_ * gz_;
  std::vector<int> counts(ncells + 1, 0);
  auto flat = [&](const Vec3& p) {
    int ix = std::clamp(cell_of(p.x, grid_origin_.x), 0, gx_ - 1);
    int iy = std::clamp(cell_of(p.y, grid_origin_.y), 0, gy_ - 1);
    int iz = std::clamp(cell_of(p.z, grid_origin_.z), 0, gz_ - 1);
    return (static_cast<std::size_t>(iz) * gy_ + iy) * gx_ + ix;
  };
  for (const Vec3& p : points_) counts[flat(p) + 1]++;
  for (std::size_t i = 1; i <= ncells; ++i) counts[i] += counts[i - 1];
  cell_start_ = counts;
  cell_items_.resize(points_.size());
  std::vector<int> cursor(cell_start_.begin(), cell_start_.end() - 1);
  for (int i = 0; i < static_cast<int>(points_.size()); ++i)
    cell_items_[cursor[flat(points_[i])]++] = i;
  brute_ = false;
}

int PointGrid::cell_of(double v, double origin) const {
  return static_cast<int>(std::floor((v - origin) / cell_));
}

std::pair<int, double> PointGrid::nearest(const Vec3& q) const {
  int best = -1;
  double best_d2 = 1e300;
  if (brute_) {
    for (int i = 0; i < static_cast<int>(points_.size()); ++i) {
      Vec3 d = points_[i] - q;
      double d2 = d.x * d.x + d.y * d.y + d.z * d.z;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    return {best, best_d2};
  }

  int cx = cell_of(q.x, grid_origin_.x);
  int cy = cell_of(q.y, grid_origin_.y);
  int cz = cell_of(q.z, grid_origin_.z);
  // ring count that reaches every grid cell even when q lies outside the grid
  int max_ring = 1;
  max_ring = std::max(max_ring, std::max(std::abs(cx), std::abs(cx - (gx_ - 1))));
  max_ring = std::max(max_ring, std::max(std::abs(cy), std::abs(cy - (gy_ - 1))));
  max_ring = std::max(max_ring, std::max(std::abs(cz), std::abs(cz - (gz_ - 1))));

  for (int ring = 0; ring <= max_ring; ++ring) {
    // Once a candidate exists, stop when the nearest possible point in this
    // ring cannot beat it. Ring r cells start at distance (r-1)*cell from q's
    // cell, conservatively.
    if (best >= 0) {
      double ring_min = (ring - 1) > 0 ? (ring - 1) * cell_ : 0.0;
      if (ring_min * ring_min > best_d2) break;
    }
    int x0 = cx - ring, x1 = cx + ring;
    int y0 = cy - ring, y1 = cy + ring;
    int z0 = cz - ring, z1 = cz + ring;
    for (int iz = z0; iz <= z1; ++iz) {
      if (iz < 0 || iz >= gz_) continue;
      for (int iy = y0; iy <= y1; ++iy) {
        if (iy < 0 || iy >= gy_) continue;
        for (int ix = x0; ix <= x1; ++ix) {
          if (ix < 0 || ix >= gx_) continue;
          // shell only
          if (ring > 0 && ix != x0 && ix != x1 && iy != y0 && iy != y1 && iz != z0 && iz != z1)
            continue;
          std::size_t c = (static_cast<std::size_t>(iz) * gy_ + iy) * gx_ + ix;
          for (int k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
            int i = cell_items_[k];
            Vec3 d = points_[i] - q;
            double d2 = d.x * d.x + d.y * d.y + d.z * d.z;
            if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
              best_d2 = d2;
              best = i;
            }
          }
        }
      }
    }
  }
  return {best, best_d2};
}

// ---------------------------------------------------------------------------
// Triangle utilities
// ---------------------------------------------------------------------------

namespace {

/// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection).
Vec3 closest_point_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  Vec3 bp = p - b;
  double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    double v = d1 / (d1 - d3);
    return a + ab * v;
  }

  Vec3 cp = p - c;
  double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    double w = d2 / (d2 - d6);
    return a + ac * w;
  }

  double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return b + (c - b) * w;
  }

  double denom = 1.0 / (va + vb + vc);
  double v = vb * denom, w = vc * denom;
  return a + ab * v + ac * w;
}

/// Solid angle of triangle abc seen from q (van Oosterom & Strackee).
double solid_angle(const Vec3& q, const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 va = a - q, vb = b - q, vc = c - q;
  double la = norm(va), lb = norm(vb), lc = norm(vc);
  double num = dot(va, cross(vb, vc));
  double den = la * lb * lc + dot(va, vb) * lc + dot(vb, vc) * la + dot(vc, va) * lb;
  return 2.0 * std::atan2(num, den);
}

}  // namespace

// ---------------------------------------------------------------------------
// MeshBvh
// ---------------------------------------------------------------------------

MeshBvh::MeshBvh(const TriMesh& mesh) : mesh_(mesh) {
  mesh_.validate();
  if (mesh_.faces.empty()) throw std::invalid_argument("degenerate mesh: no faces");
  watertight_ = is_watertight(mesh_);
  root_bounds_ = mesh_.bounds();

  std::vector<int> faces(mesh_.faces.size());
  for (int i = 0; i < static_cast<int>(faces.size()); ++i) faces[i] = i;
  order_.reserve(faces.size());
  nodes_.reserve(2 * faces.size());
  build(faces, 0, static_cast<int>(faces.size()));
}

int MeshBvh::build(std::vector<int>& faces, int first, int count) {
  Node node;
  double area_sum = 0.0;
  for (int i = first; i < first + count; ++i) {
    const auto& t = mesh_.faces[faces[i]];
    const Vec3 &a = mesh_.vertices[t[0]], &b = mesh_.vertices[t[1]], &c = mesh_.vertices[t[2]];
    node.box.expand(a);
    node.box.expand(b);
    node.box.expand(c);
    Vec3 an = cross(b - a, c - a) * 0.5;  // area-weighted normal
    double area = norm(an);
    node.area_normal += an;
    node.centroid += (a + b + c) * (area / 3.0);
    area_sum += area;
  }
  if (area_sum > 0.0)
    node.centroid = node.centroid / area_sum;
  else
    node.centroid = node.box.center();
  for (int i = first; i < first + count; ++i) {
    const auto& t = mesh_.faces[faces[i]];
    for (int k = 0; k < 3; ++k)
      node.radius = std::max(node.radius, norm(mesh_.vertices[t[k]] - node.centroid));
  }

  int idx = static_cast<int>(nodes_.size());
  nodes_.push_back(node);

  constexpr int kLeafSize = 8;
  if (count <= kLeafSize) {
    nodes_[idx].first = static_cast<int>(order_.size());
    nodes_[idx].count = count;
    for (int i = first; i < first + count; ++i) order_.push_back(faces[i]);
    return idx;
  }

  // median split along the longest centroid-extent axis
  Vec3 ext = node.box.extent();
  int axis = 0;
  if (ext.y > ext.x) axis = 1;
  if (ext.z > ext[axis]) axis = 2;
  auto fc = [&](int f) {
    const auto& t = mesh_.faces[f];
    return (mesh_.vertices[t[0]][axis] + mesh_.vertices[t[1]][axis] + mesh_.vertices[t[2]][axis]) / 3.0;
  };
  std::sort(faces.begin() + first, faces.begin() + first + count,
            [&](int f1, int f2) { return fc(f1) < fc(f2) || (fc(f1) == fc(f2) && f1 < f2); });
  int half = count / 2;
  int l = build(faces, first, half);
  int r = build(faces, first + half, count - half);
  nodes_[idx].left = l;
  nodes_[idx].right = r;
  return idx;
}

void MeshBvh::closest_rec(int ni, const Vec3& q, Closest& best) const {
  const Node& n = nodes_[ni];
  if (n.box.dist2(q) >= best.dist2) return;
  if (n.left < 0) {
    for (int i = n.first; i < n.first + n.count; ++i) {
      int f = order_[i];
      const auto& t = mesh_.faces[f];
      Vec3 cp = closest_point_triangle(q, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
                                       mesh_.vertices[t[2]]);
      double d2 = norm2(cp - q);
      if (d2 < best.dist2 || (d2 == best.dist2 && f < best.face)) {
        best.dist2 = d2;
        best.point = cp;
        best.face = f;
      }
    }
    return;
  }
  double dl = nodes_[n.left].box.dist2(q);
  double dr = nodes_[n.right].box.dist2(q);
  if (dl <= dr) {
    closest_rec(n.left, q, best);
    closest_rec(n.right, q, best);
  } else {
    closest_rec(n.right, q, best);
    closest_rec(n.left, q, best);
  }
}

MeshBvh::Closest MeshBvh::closest_point(const Vec3& q) const {
  Closest best;
  best.dist2 = 1e300;
  closest_rec(0, q, best);
  return best;
}

double MeshBvh::unsigned_distance(const Vec3& q) const { return std::sqrt(closest_point(q).dist2); }

double MeshBvh::winding_rec(int ni, const Vec3& q) const {
  const Node& n = nodes_[ni];
  double d = norm(q - n.centroid);
  if (n.left >= 0 && d > kDipoleBeta * n.radius) {
    // first-order dipole approximation of the cluster
    Vec3 r = n.centroid - q;
    double r3 = d * d * d;
    return dot(n.area_normal, r) / (4.0 * kPi * r3);
  }
  if (n.left < 0) {
    double w = 0.0;
    for (int i = n.first; i < n.first + n.count; ++i) {
      const auto& t = mesh_.faces[order_[i]];
      w += solid_angle(q, mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]]);
    }
    return w / (4.0 * kPi);
  }
  return winding_rec(n.left, q) + winding_rec(n.right, q);
}

double MeshBvh::winding_number(const Vec3& q) const { return winding_rec(0, q); }

double MeshBvh::signed_distance(const Vec3& q) const {
  if (!watertight_)
    throw std::invalid_argument("signed_distance requires a watertight mesh");
  double d = unsigned_distance(q);
  return inside(q) ? -d : d;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

PointCloud sample_surface(const TriMesh& mesh, int n, std::uint64_t seed) {
  mesh.validate();
  if (mesh.faces.empty()) throw std::invalid_argument("degenerate mesh: no faces");
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");

  std::vector<double> cdf(mesh.faces.size());
  double acc = 0.0;
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
    acc += mesh.face_area(f);
    cdf[f] = acc;
  }
  if (acc <= 0.0) throw std::invalid_argument("degenerate mesh: zero surface area");

  Rng rng(seed);
  PointCloud out;
  out.points.reserve(n);
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform() * acc;
    int f = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (f >= static_cast<int>(cdf.size())) f = static_cast<int>(cdf.size()) - 1;
    const auto& t = mesh.faces[f];
    double su = std::sqrt(rng.uniform());
    double v = rng.uniform();
    double b0 = 1.0 - su, b1 = su * (1.0 - v), b2 = su * v;
    out.points.push_back(mesh.vertices[t[0]] * b0 + mesh.vertices[t[1]] * b1 +
                         mesh.vertices[t[2]] * b2);
  }
  return out;
}

double chamfer(const PointCloud& a, const PointCloud& b) {
  a.validate();
  b.validate();
  PointGrid ga(a.points), gb(b.points);
  double sum_ab = 0.0;
  for (const Vec3& p : a.points) sum_ab += gb.nearest(p).second;
  double sum_ba = 0.0;
  for (const Vec3& p : b.points) sum_ba += ga.nearest(p).second;
  return sum_ab / static_cast<double>(a.size()) + sum_ba / static_cast<double>(b.size());
}

double signed_distance(const TriMesh& mesh, const Vec3& p) {
  return MeshBvh(mesh).signed_distance(p);
}

double unsigned_distance(const TriMesh& mesh, const Vec3& p) {
  return MeshBvh(mesh).unsigned_distance(p);
}

VoxelGrid voxelize_solid(const MeshBvh& bvh, double resolution) {
  if (resolution <= 0.0) throw std::invalid_argument("voxel resolution must be > 0");
  if (!bvh.watertight()) throw std::invalid_argument("voxelize_solid requires a watertight mesh");

  const Aabb& box = bvh.bounds();
  VoxelGrid g;
  g.resolution = resolution;
  g.origin = box.lo - Vec3{resolution, resolution, resolution};
  Vec3 ext = box.extent();
  g.nx = static_cast<int>(std::ceil(ext.x / resolution)) + 2;
  g.ny = static_cast<int>(std::ceil(ext.y / resolution)) + 2;
  g.nz = static_cast<int>(std::ceil(ext.z / resolution)) + 2;
  g.occupancy.assign(static_cast<std::size_t>(g.nx) * g.ny * g.nz, 0);
  for (int iz = 0; iz < g.nz; ++iz)
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = 0; ix < g.nx; ++ix)
        if (bvh.inside(g.center(ix, iy, iz))) g.occupancy[g.index(ix, iy, iz)] = 1;
  return g;
}

VoxelGrid voxelize_solid(const TriMesh& mesh, double resolution) {
  return voxelize_solid(MeshBvh(mesh), resolution);
}

double intersection_volume_cm3(const MeshBvh& a, const MeshBvh& b, double resolution) {
  if (resolution <= 0.0) throw std::invalid_argument("voxel resolution must be > 0");
  if (!a.watertight() || !b.watertight())
    throw std::invalid_argument("intersection volume requires watertight meshes");

  // Shared grid over both padded boxes; only centers inside the box overlap
  // can be inside both meshes, so iteration is clipped to it.
  Aabb joint = a.bounds();
  joint.expand(b.bounds());
  Vec3 origin = joint.lo - Vec3{resolution, resolution, resolution};

  Aabb clip;
  clip.lo = cwise_max(a.bounds().lo, b.bounds().lo);
  clip.hi = cwise_min(a.bounds().hi, b.bounds().hi);
  if (!clip.valid()) return 0.0;

  auto lo_idx = [&](double v, double o) {
    return static_cast<int>(std::floor((v - o) / resolution - 0.5));
  };
  auto hi_idx = [&](double v, double o) {
    return static_cast<int>(std::ceil((v - o) / resolution - 0.5));
  };
  int x0 = lo_idx(clip.lo.x, origin.x), x1 = hi_idx(clip.hi.x, origin.x);
  int y0 = lo_idx(clip.lo.y, origin.y), y1 = hi_idx(clip.hi.y, origin.y);
  int z0 = lo_idx(clip.lo.z, origin.z), z1 = hi_idx(clip.hi.z, origin.z);

  std::int64_t count = 0;
  for (int iz = z0; iz <= z1; ++iz)
    for (int iy = y0; iy <= y1; ++iy)
      for (int ix = x0; ix <= x1; ++ix) {
        Vec3 c = origin + Vec3{(ix + 0.5) * resolution, (iy + 0.5) * resolution,
                               (iz + 0.5) * resolution};
        if (a.inside(c) && b.inside(c)) ++count;
      }
  return static_cast<double>(count) * resolution * resolution * resolution * 1e6;
}

double intersection_volume_cm3(const TriMesh& a, const TriMesh& b, double resolution) {
  return intersection_volume_cm3(MeshBvh(a), MeshBvh(b), resolution);
}

}  // namespace gf
