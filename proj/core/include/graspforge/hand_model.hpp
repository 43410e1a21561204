#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "graspforge/geometry.hpp"
#include "graspforge/tensor.hpp"
#include "graspforge/vec.hpp"

namespace gf {

inline constexpr int kHandParamDim = 61;  // 3 translation + 16*3 pose + 10 shape
inline constexpr int kHandJoints = 16;    // wrist + 3 per finger
inline constexpr int kHandShapeDim = 10;
inline constexpr int kHandKeypoints = 21;  // wrist + (mcp, pip, dip, tip) per finger
inline constexpr int kHandVertexCount = 778;
inline constexpr double kShapeCoeffLimit = 5.0;

// 61-dim hand parameter vector: translation (3), per-joint axis-angle pose
// (16x3, joint 0 doubles as the global rotation), shape coefficients (10,
// clamped to [-5, 5] at construction).
struct HandParams {
  std::array<double, kHandParamDim> v{};

  HandParams() = default;
  static HandParams from_vector(const std::vector<double>& values);  // validates + clamps
  std::vector<double> to_vector() const { return {v.begin(), v.end()}; }

  Vec3 translation() const { return {v[0], v[1], v[2]}; }
  void set_translation(const Vec3& t) { v[0] = t.x; v[1] = t.y; v[2] = t.z; }
  Vec3 joint_pose(int j) const { return {v[3 + 3 * j], v[4 + 3 * j], v[5 + 3 * j]}; }
  void set_joint_pose(int j, const Vec3& aa) {
    v[3 + 3 * j] = aa.x; v[4 + 3 * j] = aa.y; v[5 + 3 * j] = aa.z;
  }
  double shape(int k) const { return v[51 + k]; }
  void set_shape(int k, double c);

  void validate() const;  // finite, shape within limits
};

struct HandMesh {
  std::vector<Vec3> vertices;
  const std::vector<std::array<int, 3>>* faces = nullptr;  // shared with template

  TriMesh to_mesh() const;
};

struct HandTemplate {
  std::vector<Vec3> rest_vertices;              // V
  std::vector<std::array<int, 3>> faces;
  std::array<Vec3, kHandJoints> joint_rest{};   // joint 0 at the origin
  std::array<int, kHandJoints> parent{};        // parent[0] == -1
  std::vector<double> skin_weights;             // V x 16, rows sum to 1
  std::vector<Vec3> shape_basis;                // 10 x V displacement fields
  std::vector<double> keypoint_regressor;       // 21 x V, rows sum to 1

  int vertex_count() const { return static_cast<int>(rest_vertices.size()); }
  double weight(int v, int j) const { return skin_weights[static_cast<std::size_t>(v) * kHandJoints + j]; }
  const Vec3& shape_dir(int k, int v) const {
    return shape_basis[static_cast<std::size_t>(k) * rest_vertices.size() + v];
  }

  void validate() const;  // dims, stochastic rows, parent tree rooted at 0
};

// Saved forward-pass state for the analytic backward/Jacobian passes.
struct LbsCache {
  HandParams params;
  std::array<Affine, kHandJoints> global{};  // G_j
  std::array<Affine, kHandJoints> skin{};    // A_j = G_j * [I | -J_j]
  std::vector<Vec3> shaped_rest;             // rest + shape offsets
  std::vector<Mat3> blend_rot;               // per-vertex sum_j w_ij * rot(A_j)
  std::vector<double> weight_sum;            // per-vertex sum_j w_ij (~1)
};

/// Linear blend skinning forward pass. Deterministic and differentiable in
/// all 61 parameters.
HandMesh lbs_forward(const HandTemplate& tmpl, const HandParams& params,
                     LbsCache* cache = nullptr);

/// Reverse pass: gradient of a scalar wrt the 61 parameters given its
/// gradient wrt the output vertices.
std::array<double, kHandParamDim> lbs_backward(const HandTemplate& tmpl, const LbsCache& cache,
                                               const std::vector<Vec3>& dl_dverts);

/// Full Jacobian d(vertices)/d(params), shape (3V) x 61, row-major, vertex
/// coordinates ordered x,y,z per vertex.
Tensor64 lbs_jacobian(const HandTemplate& tmpl, const HandParams& params);

/// Keypoints as the regressor applied to mesh vertices, 21 x 3.
std::vector<Vec3> keypoints(const HandTemplate& tmpl, const HandMesh& mesh);
std::vector<Vec3> keypoints(const HandTemplate& tmpl, const std::vector<Vec3>& vertices);

/// Capsule-based five-finger hand with exactly 778 vertices and 16 joints.
/// All fields are snapped to fp32 so construction equals a save/load round
/// trip. Deterministic per seed.
HandTemplate build_procedural_template(std::uint64_t seed);

// Template persistence: manifest JSON (dims, parents, faces) + tensor blob.
void save_template(const HandTemplate& tmpl, const std::filesystem::path& json_path,
                   const std::filesystem::path& blob_path);
HandTemplate load_external_template(const std::filesystem::path& json_path);

/// Rodrigues rotation with a series branch near zero angle.
Mat3 rotation_axis_angle(const Vec3& aa);
/// Rotation plus its three partial derivative matrices dR/d(aa_i).
void rotation_axis_angle_jacobian(const Vec3& aa, Mat3& r, std::array<Mat3, 3>& dr);

}  // namespace gf
