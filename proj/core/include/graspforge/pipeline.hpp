#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "graspforge/adaptation.hpp"
#include "graspforge/diffusion.hpp"
#include "graspforge/metrics.hpp"

namespace gf {

// Loaded checkpoint set: ae/ + diffusion/ (+ adapt/). Immutable after load.
struct Bundle {
  AeModel ae;
  std::uint64_t ae_hash = 0;
  DiffusionModel diffusion;
  std::uint64_t diffusion_hash = 0;
  std::optional<AdapterModel> adapter;
  std::vector<std::string> warnings;  // lineage mismatches etc.

  static Bundle load(const std::filesystem::path& dir, bool require_adapter);
};

struct GeneratedGrasp {
  HandParams params;
  HandMesh mesh;
  std::uint64_t sample_seed = 0;
  long denoiser_evals = 0;
  double latency_s = 0.0;
};

/// One-stage inference: noise + object cloud -> DDIM -> adapt -> decode ->
/// skinning. Exactly ddim_steps denoiser evaluations per sample, no
/// iterative refinement. Deterministic per (seed, sample index).
std::vector<GeneratedGrasp> generate(const Bundle& bundle, const TriMesh& object, int count,
                                     int ddim_steps, std::uint64_t seed, bool use_adapter = true);

struct BenchmarkReport {
  int object_count = 0;
  int per_object = 1;
  int ddim_steps = 0;
  double mean_latency_s = 0.0;
  double median_latency_s = 0.0;
  std::string hardware;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// Wall-clock per-grasp generation time over a procedural object set.
BenchmarkReport run_benchmark(const Bundle& bundle, int object_count, int per_object,
                              int ddim_steps, std::uint64_t seed);

std::string hardware_descriptor();

/// evaluate_set adapter: generates with this bundle, reports all metrics.
GraspReport evaluate_bundle(const Bundle& bundle, const std::vector<TriMesh>& objects,
                            int per_object, int ddim_steps, std::uint64_t seed, bool use_adapter,
                            const SimParams& sim = {});

}  // namespace gf
