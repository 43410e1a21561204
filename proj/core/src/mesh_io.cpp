#include "graspforge/mesh_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gf {

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

[[noreturn]] void fail(const std::filesystem::path& p, const std::string& msg) {
  throw std::runtime_error(p.string() + ": " + msg);
}

// "3/1/2" -> 3 (OBJ face entries may carry texture/normal refs)
int parse_obj_index(const std::string& tok, std::size_t nverts, const std::filesystem::path& p) {
  std::size_t slash = tok.find('/');
  int idx = std::stoi(slash == std::string::npos ? tok : tok.substr(0, slash));
  if (idx < 0) idx = static_cast<int>(nverts) + idx + 1;  // relative indexing
  if (idx < 1 || idx > static_cast<int>(nverts)) fail(p, "face index out of range: " + tok);
  return idx - 1;
}

}  // namespace

TriMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open");
  TriMesh m;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x >> v.y >> v.z)) fail(path, "malformed vertex line: " + line);
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) idx.push_back(parse_obj_index(tok, m.vertices.size(), path));
      if (idx.size() < 3) fail(path, "face with fewer than 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k)  // fan-triangulate
        m.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  if (m.vertices.empty() || m.faces.empty()) fail(path, "no geometry found");
  m.validate();
  return m;
}

void write_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(path, "cannot open for writing");
  for (const Vec3& v : mesh.vertices)
    out << "v " << fmt9(v.x) << ' ' << fmt9(v.y) << ' ' << fmt9(v.z) << '\n';
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) fail(path, "write failed");
}

TriMesh read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open");
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) fail(path, "missing ply magic");

  long n_verts = -1, n_faces = -1;
  bool ascii = false;
  std::string current_element;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "format") {
      std::string f;
      ss >> f;
      ascii = (f == "ascii");
    } else if (tag == "element") {
      long count;
      ss >> current_element >> count;
      if (current_element == "vertex") n_verts = count;
      if (current_element == "face") n_faces = count;
    } else if (tag == "end_header") {
      break;
    }
  }
  if (!ascii) fail(path, "only ascii ply is supported");
  if (n_verts < 1 || n_faces < 1) fail(path, "missing vertex/face elements");

  TriMesh m;
  m.vertices.reserve(n_verts);
  for (long i = 0; i < n_verts; ++i) {
    if (!std::getline(in, line)) fail(path, "truncated vertex list");
    std::istringstream ss(line);
    Vec3 v;
    if (!(ss >> v.x >> v.y >> v.z)) fail(path, "malformed vertex line: " + line);
    m.vertices.push_back(v);
  }
  for (long i = 0; i < n_faces; ++i) {
    if (!std::getline(in, line)) fail(path, "truncated face list");
    std::istringstream ss(line);
    int n;
    if (!(ss >> n) || n < 3) fail(path, "malformed face line: " + line);
    std::vector<int> idx(n);
    for (int k = 0; k < n; ++k)
      if (!(ss >> idx[k])) fail(path, "malformed face line: " + line);
    for (int k = 1; k + 1 < n; ++k) m.faces.push_back({idx[0], idx[k], idx[k + 1]});
  }
  m.validate();
  return m;
}

void write_ply(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(path, "cannot open for writing");
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "element face " << mesh.faces.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (const Vec3& v : mesh.vertices)
    out << fmt9(v.x) << ' ' << fmt9(v.y) << ' ' << fmt9(v.z) << '\n';
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  if (!out) fail(path, "write failed");
}

namespace {
std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}
}  // namespace

TriMesh read_mesh(const std::filesystem::path& path) {
  std::string e = lower_ext(path);
  if (e == ".obj") return read_obj(path);
  if (e == ".ply") return read_ply(path);
  fail(path, "unsupported mesh format (expected .obj or .ply)");
}

void write_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
  std::string e = lower_ext(path);
  if (e == ".obj") return write_obj(mesh, path);
  if (e == ".ply") return write_ply(mesh, path);
  fail(path, "unsupported mesh format (expected .obj or .ply)");
}

}  // namespace gf
