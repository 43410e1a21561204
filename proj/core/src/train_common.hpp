#pragma once

// Internal training plumbing shared by the stage-one/stage-two trainers.

#include <cstdint>
#include <vector>

#include "graspforge/dataset.hpp"
#include "graspforge/losses.hpp"
#include "graspforge/losses_ad.hpp"
#include "graspforge/rng.hpp"

namespace gf::detail {

// seed stream tags
inline constexpr std::uint64_t kSeedInit = 0xA1;
inline constexpr std::uint64_t kSeedBatch = 0xB2;
inline constexpr std::uint64_t kSeedCloud = 0xC3;
inline constexpr std::uint64_t kSeedStats = 0xD4;
inline constexpr std::uint64_t kSeedNoise = 0xE5;

// One record viewed in the object-centered frame used by the networks.
struct CenteredScene {
  PointCloud obj_points;  // centroid at the origin
  Vec3 offset;            // original cloud centroid
  std::vector<double> gt_params;     // translation shifted by -offset
  std::vector<Vec3> gt_verts_sub;    // subsampled GT vertices, centered
  std::vector<float> gt_verts_sub_f; // same, flattened row-major floats
  GraspLossSample loss_sample;       // wired to the fields above
};

CenteredScene prepare_scene(const Dataset& ds, const DatasetRecord& rec,
                            const std::vector<int>& vertex_subset, int n_points,
                            std::uint64_t cloud_seed, bool with_losses);

/// k distinct indices from [0, n), deterministic per rng state.
std::vector<int> sample_batch(Rng& rng, int n, int k);

}  // namespace gf::detail
