#pragma once

#include <filesystem>

#include "graspforge/geometry.hpp"

namespace gf {

// Wavefront OBJ (v/f triangle lines, 1-indexed) and ASCII PLY. Writers emit
// vertex coordinates with 9 significant digits.

TriMesh read_obj(const std::filesystem::path& path);
void write_obj(const TriMesh& mesh, const std::filesystem::path& path);

TriMesh read_ply(const std::filesystem::path& path);
void write_ply(const TriMesh& mesh, const std::filesystem::path& path);

/// Dispatch on extension (.obj / .ply, case-insensitive).
TriMesh read_mesh(const std::filesystem::path& path);
void write_mesh(const TriMesh& mesh, const std::filesystem::path& path);

}  // namespace gf
