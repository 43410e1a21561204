#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include <functional>

#include "graspforge/geometry.hpp"
#include "graspforge/losses.hpp"
#include "graspforge/physics_sim.hpp"

namespace gf {

inline constexpr int kDiversityClusters = 20;
inline constexpr double kPenetrationVoxel = 0.001;  // 1mm

struct PerGraspMetrics {
  double penetration_cm3 = 0.0;
  double displacement_cm = 0.0;
  bool in_contact = false;
};

struct GraspReport {
  int schema_version = 1;
  std::vector<PerGraspMetrics> per_grasp;
  double mean_penetration_cm3 = 0.0;
  double mean_displacement_cm = 0.0;
  double contact_ratio_pct = 0.0;
  double entropy_nats = 0.0;
  double cluster_size_cm = 0.0;
  std::optional<double> mean_latency_s;  // filled by the benchmark path only
  nlohmann::json config;                 // seeds + options echo

  nlohmann::json to_json() const;
  std::string to_csv() const;  // one row per grasp + an aggregate row
};

/// Hand-object overlap at 1mm voxels, cm^3.
double penetration_volume(const TriMesh& hand, const TriMesh& obj);
double penetration_volume(const MeshBvh& hand, const MeshBvh& obj);

/// Min hand-vertex distance to the object surface below 5mm.
bool grasp_in_contact(const std::vector<Vec3>& hand_vertices, const MeshBvh& obj);

/// Percentage of grasps in contact.
double contact_ratio(const std::vector<bool>& in_contact);

/// Object drop test against the static hand; cm of center-of-mass drift.
double simulation_displacement(const TriMesh& hand, const TriMesh& obj,
                               const SimParams& params = {});

struct DiversityResult {
  double entropy_nats = 0.0;
  double cluster_size_cm = 0.0;
};

/// K-means (k-means++ init, 100 fixed Lloyd iterations) over flattened
/// keypoint sets; entropy of assignment frequencies and mean member-centroid
/// distance (cm) over non-empty clusters.
DiversityResult diversity(const std::vector<std::vector<Vec3>>& keypoint_sets,
                          int k = kDiversityClusters, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Set evaluation (generation provided via callback to keep layering acyclic)
// ---------------------------------------------------------------------------

struct GraspForMetrics {
  TriMesh hand;
  std::vector<Vec3> keypoints;
};

using GraspGenFn =
    std::function<std::vector<GraspForMetrics>(const TriMesh& object, int count, int object_index)>;

/// Generates per_object grasps per object and aggregates all metrics.
GraspReport evaluate_set(const GraspGenFn& generate, const std::vector<TriMesh>& objects,
                         int per_object, std::uint64_t diversity_seed,
                         const SimParams& sim = {});

}  // namespace gf
