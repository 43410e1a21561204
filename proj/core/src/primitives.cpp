#include "graspforge/primitives.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace gf {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TriMesh make_box(const Vec3& e) {
  TriMesh m;
  double hx = e.x / 2, hy = e.y / 2, hz = e.z / 2;
  m.vertices = {{-hx, -hy, -hz}, {hx, -hy, -hz}, {hx, hy, -hz}, {-hx, hy, -hz},
                {-hx, -hy, hz},  {hx, -hy, hz},  {hx, hy, hz},  {-hx, hy, hz}};
  m.faces = {{0, 2, 1}, {0, 3, 2},   // -z
             {4, 5, 6}, {4, 6, 7},   // +z
             {0, 1, 5}, {0, 5, 4},   // -y
             {3, 7, 6}, {3, 6, 2},   // +y
             {0, 4, 7}, {0, 7, 3},   // -x
             {1, 2, 6}, {1, 6, 5}};  // +x
  return m;
}

namespace {

// Shared lat/long topology builder: `row_pos(i)` gives ring center z and
// radius for rows 0..rows-1; poles at `south`/`north`.
TriMesh lat_long_mesh(int segments, int rows, const Vec3& south, const Vec3& north,
                      const std::vector<std::pair<double, double>>& ring_zr) {
  TriMesh m;
  m.vertices.push_back(south);
  for (int i = 0; i < rows; ++i) {
    auto [z, r] = ring_zr[i];
    for (int s = 0; s < segments; ++s) {
      double a = 2.0 * kPi * s / segments;
      m.vertices.push_back({r * std::cos(a), r * std::sin(a), z});
    }
  }
  m.vertices.push_back(north);
  int north_idx = static_cast<int>(m.vertices.size()) - 1;

  auto ring = [&](int i, int s) { return 1 + i * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) m.faces.push_back({0, ring(0, s + 1), ring(0, s)});
  for (int i = 0; i + 1 < rows; ++i)
    for (int s = 0; s < segments; ++s) {
      int a = ring(i, s), b = ring(i, s + 1), c = ring(i + 1, s + 1), d = ring(i + 1, s);
      m.faces.push_back({a, b, c});
      m.faces.push_back({a, c, d});
    }
  for (int s = 0; s < segments; ++s)
    m.faces.push_back({north_idx, ring(rows - 1, s), ring(rows - 1, s + 1)});
  return m;
}

}  // namespace

TriMesh make_uv_sphere(double radius, int segments, int rings) {
  if (segments < 3 || rings < 1) throw std::invalid_argument("uv sphere too coarse");
  std::vector<std::pair<double, double>> zr(rings);
  for (int i = 0; i < rings; ++i) {
    double phi = kPi * (i + 1) / (rings + 1) - kPi / 2;  // -pi/2..pi/2 exclusive
    zr[i] = {radius * std::sin(phi), radius * std::cos(phi)};
  }
  return lat_long_mesh(segments, rings, {0, 0, -radius}, {0, 0, radius}, zr);
}

TriMesh make_capsule(double radius, double length, int segments, int rings) {
  if (segments < 3 || rings < 3) throw std::invalid_argument("capsule too coarse");
  double h = length / 2;
  int cap_rows = std::max(1, rings / 4);
  int cyl_rows = rings - 2 * cap_rows;
  if (cyl_rows < 1) {
    cap_rows = (rings - 1) / 2;
    cyl_rows = rings - 2 * cap_rows;
  }
  std::vector<std::pair<double, double>> zr;
  zr.reserve(rings);
  for (int i = 0; i < cap_rows; ++i) {  // lower hemisphere
    double phi = -kPi / 2 + kPi / 2 * (i + 1) / (cap_rows + 1);
    zr.push_back({-h + radius * std::sin(phi), radius * std::cos(phi)});
  }
  for (int i = 0; i < cyl_rows; ++i)  // straight section, includes both seams
    zr.push_back({-h + length * i / std::max(1, cyl_rows - 1), radius});
  if (cyl_rows == 1) zr.back().first = 0.0;
  for (int i = 0; i < cap_rows; ++i) {  // upper hemisphere
    double phi = kPi / 2 * (i + 1) / (cap_rows + 1);
    zr.push_back({h + radius * std::sin(phi), radius * std::cos(phi)});
  }
  return lat_long_mesh(segments, rings, {0, 0, -h - radius}, {0, 0, h + radius}, zr);
}

TriMesh make_cylinder(double radius, double height, int segments) {
  if (segments < 3) throw std::invalid_argument("cylinder too coarse");
  TriMesh m;
  double h = height / 2;
  m.vertices.push_back({0, 0, -h});  // 0: bottom center
  m.vertices.push_back({0, 0, h});   // 1: top center
  for (int s = 0; s < segments; ++s) {
    double a = 2.0 * kPi * s / segments;
    m.vertices.push_back({radius * std::cos(a), radius * std::sin(a), -h});
  }
  for (int s = 0; s < segments; ++s) {
    double a = 2.0 * kPi * s / segments;
    m.vertices.push_back({radius * std::cos(a), radius * std::sin(a), h});
  }
  auto bot = [&](int s) { return 2 + (s % segments); };
  auto top = [&](int s) { return 2 + segments + (s % segments); };
  for (int s = 0; s < segments; ++s) {
    m.faces.push_back({0, bot(s + 1), bot(s)});
    m.faces.push_back({1, top(s), top(s + 1)});
    m.faces.push_back({bot(s), bot(s + 1), top(s + 1)});
    m.faces.push_back({bot(s), top(s + 1), top(s)});
  }
  return m;
}

TriMesh make_icosphere(double radius, int subdivisions) {
  // icosahedron
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                         {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                         {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int pass = 0; pass < subdivisions; ++pass) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec3 p = (v[a] + v[b]) * 0.5;
      int idx = static_cast<int>(v.size());
      v.push_back(p);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> nf;
    nf.reserve(f.size() * 4);
    for (const auto& tri : f) {
      int ab = mid(tri[0], tri[1]), bc = mid(tri[1], tri[2]), ca = mid(tri[2], tri[0]);
      nf.push_back({tri[0], ab, ca});
      nf.push_back({tri[1], bc, ab});
      nf.push_back({tri[2], ca, bc});
      nf.push_back({ab, bc, ca});
    }
    f = std::move(nf);
  }

  TriMesh m;
  m.vertices.reserve(v.size());
  for (const Vec3& p : v) m.vertices.push_back(normalized(p) * radius);
  m.faces = std::move(f);
  return m;
}

void translate_mesh(TriMesh& mesh, const Vec3& t) {
  for (Vec3& v : mesh.vertices) v += t;
}

void transform_mesh(TriMesh& mesh, const Mat3& linear, const Vec3& t) {
  for (Vec3& v : mesh.vertices) v = linear * v + t;
  // a reflecting transform would flip orientation; reject early
  Mat3 l = linear;
  double det = l(0, 0) * (l(1, 1) * l(2, 2) - l(1, 2) * l(2, 1)) -
               l(0, 1) * (l(1, 0) * l(2, 2) - l(1, 2) * l(2, 0)) +
               l(0, 2) * (l(1, 0) * l(2, 1) - l(1, 1) * l(2, 0));
  if (det < 0.0) throw std::invalid_argument("reflecting transforms are not supported");
}

void append_mesh(TriMesh& mesh, const TriMesh& add) {
  int base = static_cast<int>(mesh.vertices.size());
  mesh.vertices.insert(mesh.vertices.end(), add.vertices.begin(), add.vertices.end());
  for (const auto& f : add.faces)
    mesh.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
}

}  // namespace gf
