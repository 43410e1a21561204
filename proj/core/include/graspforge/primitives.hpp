#pragma once

#include "graspforge/geometry.hpp"

namespace gf {

// Closed primitive meshes, outward-oriented. Dimensions in meters.

TriMesh make_box(const Vec3& extents);                       // axis-aligned, centered at origin
TriMesh make_uv_sphere(double radius, int segments, int rings);
TriMesh make_icosphere(double radius, int subdivisions);
TriMesh make_cylinder(double radius, double height, int segments);  // axis +z
/// Capsule along +z: cylinder of given length between hemispherical caps.
/// `rings` counts latitude rows (poles excluded); vertex count = segments*rings + 2.
TriMesh make_capsule(double radius, double length, int segments, int rings);

// In-place mesh edits.
void translate_mesh(TriMesh& mesh, const Vec3& t);
void transform_mesh(TriMesh& mesh, const Mat3& linear, const Vec3& t);
/// Appends `add` as an extra closed component (vertex indices re-based).
void append_mesh(TriMesh& mesh, const TriMesh& add);

}  // namespace gf
