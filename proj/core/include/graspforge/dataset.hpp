#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "graspforge/geometry.hpp"
#include "graspforge/hand_model.hpp"

namespace gf {

struct DatasetRecord {
  std::filesystem::path object_path;
  std::filesystem::path grasp_path;
  int object_index = 0;  // records sharing an object share this
  std::string split;     // "train" | "test"
  TriMesh object;
  std::shared_ptr<MeshBvh> object_bvh;
  HandParams gt_params;
};

struct Dataset {
  HandTemplate tmpl;
  std::uint64_t template_hash = 0;  // content hash of the template blob file
  std::filesystem::path root;
  nlohmann::json manifest;
  std::vector<DatasetRecord> records;

  std::vector<int> train_indices() const;
  std::vector<int> test_indices() const;
  /// Record indices grouped by object, group per object index.
  std::vector<std::vector<int>> object_groups(const std::string& split) const;
};

/// Watertight primitive objects (sphere, box, cylinder, capsule, two-part
/// compound) with extents in [4, 12] cm, AABB-centered at the origin.
std::vector<TriMesh> make_objects(int count, std::uint64_t seed);

struct FitOptions {
  int steps = 400;
  int max_tries = 8;
  double lr = 4e-3;
  double accept_penetration_cm3 = 2.0;
  double contact_threshold = 0.005;  // m
};

struct FitResult {
  HandParams params;
  bool accepted = false;
  double penetration_cm3 = 0.0;
  bool in_contact = false;
  int tries_used = 0;
};

/// Synthesizes a ground-truth grasp: from a random wrist pose on a standoff
/// sphere, Adam minimizes the contact-pull and penetration terms plus a
/// wrist-distance prior; accepted iff penetration < 2 cm^3 and in contact.
FitResult fit_gt_grasp(const HandTemplate& tmpl, const TriMesh& obj, const MeshBvh& obj_bvh,
                       std::uint64_t seed, const FitOptions& opts = {});

struct MakeDatasetOptions {
  int object_count = 16;
  int grasps_per_object = 2;
  std::uint64_t seed = 0;
  FitOptions fit;
};

/// Generates objects + fitted grasps under `out_dir` and writes
/// manifest.json. The last grasp of each object is held out as "test" when
/// grasps_per_object >= 2. Returns a generation summary.
nlohmann::json make_dataset(const MakeDatasetOptions& opts, const std::filesystem::path& out_dir);

/// Loads and validates a dataset; with `verify_grasps` the fit acceptance
/// predicate (penetration/contact) is re-checked per record.
Dataset load_dataset(const std::filesystem::path& manifest_path, bool verify_grasps = false);

}  // namespace gf
