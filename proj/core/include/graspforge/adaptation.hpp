#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "graspforge/diffusion.hpp"

namespace gf {

// Residual latent refiner: z2 = f_adapt(z1), decoded as D(z1 + z2). The
// final layer starts at zero so the module is the identity refinement until
// trained.
struct AdaptConfig {
  std::vector<int> hidden = {64, 64};  // widths between latent in/out
  LossWeights weights = LossWeights::stage_two();
  double lr = 1e-3;
  int batch_size = 8;
  int steps = 400;
  int ddim_steps = 50;
  std::uint64_t seed = 3;

  static AdaptConfig toy();
  static AdaptConfig paper();  // 768 -> 768 -> 768 stack

  nlohmann::json to_json() const;
  static AdaptConfig from_json(const nlohmann::json& j);
  void validate() const;

  nn::MlpSpec spec(int latent_dim) const;  // latent -> hidden... -> latent
};

struct AdapterModel {
  AdaptConfig config;
  int latent_dim = 0;
  NamedTensors params;

  static AdapterModel initialize(const AdaptConfig& cfg, int latent_dim);

  /// z2 = f_adapt(z1); exactly zero at initialization.
  std::vector<float> apply(const std::vector<float>& z1) const;
};

/// Refined decode: h_p = D(z1 + f_adapt(z1)), mesh via the skinning layer.
std::pair<HandParams, HandMesh> refine_and_decode(const AeModel& ae, const AdapterModel& adapter,
                                                  const std::vector<float>& z1);

struct AdaptTrainResult {
  LossBreakdown final_loss;
  std::uint64_t checkpoint_hash = 0;
};

/// Stage-two training: per batch item a fresh DDIM sample conditioned on the
/// object becomes z1; only adapter parameters update, AE and diffusion stay
/// frozen (their hashes are recorded as lineage).
AdaptTrainResult train_adaptation(const AeModel& ae, std::uint64_t ae_hash,
                                  const DiffusionModel& diff, std::uint64_t diff_hash,
                                  const Dataset& dataset, const AdaptConfig& cfg,
                                  const std::filesystem::path& out_dir,
                                  const TrainLogFn& log = {});

AdapterModel load_adapter(const std::filesystem::path& dir);

}  // namespace gf
