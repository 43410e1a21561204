#pragma once

#include <vector>

#include <json.hpp>

#include "graspforge/geometry.hpp"

namespace gf {

// Contact model constants, shared between losses and metrics.
inline constexpr double kContactTau = 0.005;        // soft contact midpoint, 5mm
inline constexpr double kContactSharpness = 0.001;  // logistic scale, 1mm
inline constexpr double kCmapClip = 0.02;           // contact-pull clip, 2cm
inline constexpr double kContactThreshold = 0.005;  // hard in-contact test, 5mm

struct LossWeights {
  double l1 = 0.0, l2 = 0.0, l3 = 0.0, l4 = 0.0, l5 = 0.0;

  void validate() const;
  static LossWeights stage_one() { return {0.1, 1.0, 1000.0, 10.0, 10.0}; }
  static LossWeights stage_two() { return {100.0, 0.1, 1000.0, 20.0, 0.1}; }
  static LossWeights reconstruction_only(const LossWeights& w) { return {w.l1, w.l2, 0, 0, 0}; }

  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
};

/// Per-object-point soft contact value in [0,1]:
/// C_i = 1 - sigmoid((d_i - tau)/s), d_i = distance to nearest hand vertex.
std::vector<double> contact_map(const std::vector<Vec3>& hand_vertices, const PointCloud& obj);

/// Object-point indices pulled toward contact. With a ground-truth hand the
/// candidates are the points its contact map marks (C >= 1/2); otherwise the
/// 5% of object points nearest the given hand.
std::vector<int> contact_candidates(const PointCloud& obj, const std::vector<Vec3>& hand_vertices,
                                    bool is_ground_truth);

/// Mean squared error over the 61 parameter entries.
double loss_param(const std::vector<double>& pred, const std::vector<double>& gt);

/// Chamfer distance between vertex sets (m^2).
double loss_mesh(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt);

/// Mean distance (clipped at 2cm) from candidate object points to their
/// nearest hand vertex.
double loss_cmap(const std::vector<Vec3>& hand_vertices, const PointCloud& obj,
                 const std::vector<int>& candidates);

/// Sum of |signed distance| over hand vertices strictly inside the object.
double loss_penetr(const std::vector<Vec3>& hand_vertices, const MeshBvh& obj);

/// Mean squared difference between predicted and ground-truth contact maps.
double loss_consist(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                    const PointCloud& obj);

struct LossBreakdown {
  double param = 0.0, mesh = 0.0, cmap = 0.0, penetr = 0.0, consist = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const;
};

/// lambda1*param + lambda2*mesh + lambda3*cmap + lambda4*penetr + lambda5*consist.
LossBreakdown total_loss(const std::vector<double>& pred_params,
                         const std::vector<double>& gt_params, const std::vector<Vec3>& pred_mesh,
                         const std::vector<Vec3>& gt_mesh, const MeshBvh& obj,
                         const PointCloud& obj_points, const LossWeights& weights);

}  // namespace gf
