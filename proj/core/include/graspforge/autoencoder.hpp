#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "graspforge/hand_model.hpp"
#include "graspforge/losses.hpp"
#include "graspforge/nn/model.hpp"
#include "graspforge/persistence.hpp"

namespace gf {

struct Dataset;  // dataset.hpp

// Asymmetric autoencoder: hand vertices -> PointNet -> latent z -> dense
// decoder -> 61 MANO-style parameters (shape entries tanh-bounded to +-5).
struct AeConfig {
  int n_z = 64;
  std::vector<int> enc_point_widths = {3, 32, 64, 128};  // shared point MLP
  std::vector<int> enc_param_widths = {61, 128, 128};    // param-input ablation
  std::vector<int> dec_hidden = {128, 128};
  std::string input_mode = "vertices";  // "vertices" | "params"
  LossWeights weights = LossWeights::stage_one();
  double lr = 1e-3;
  int batch_size = 16;
  int steps = 2500;
  std::uint64_t seed = 1;
  int vertex_subsample = 256;  // encoder/mesh-loss vertex budget
  int object_points = 512;     // sampled object cloud size

  /// Desk-scale profile used by the test suites.
  static AeConfig toy();
  /// Full-scale profile: N_z=768, 3000-point clouds, batch 256, LR 1e-4.
  static AeConfig paper();

  nlohmann::json to_json() const;
  static AeConfig from_json(const nlohmann::json& j);
  void validate() const;

  nn::MlpSpec point_spec() const;    // all-relu shared MLP
  nn::MlpSpec enc_head_spec() const; // pooled features -> n_z, linear
  nn::MlpSpec enc_param_spec() const;
  nn::MlpSpec decoder_spec() const;  // n_z -> 61 raw outputs
};

/// Evenly spaced vertex subset indices (all vertices when budget >= count).
std::vector<int> subsample_indices(int vertex_count, int budget);

struct AeModel {
  AeConfig config;
  NamedTensors params;
  HandTemplate tmpl;
  std::vector<float> latent_mean, latent_std;  // recorded z statistics

  static AeModel initialize(const AeConfig& cfg, const HandTemplate& tmpl);

  /// PointNet encoding of a hand vertex set (any count, permutation
  /// invariant). Uses the parameter-MLP in "params" input mode.
  std::vector<float> encode(const std::vector<Vec3>& hand_vertices) const;
  std::vector<float> encode_params(const std::vector<double>& params61) const;

  /// Latent -> 61 parameters; shape coefficients bounded via 5*tanh.
  HandParams decode(const std::vector<float>& z) const;

  std::vector<float> standardize(const std::vector<float>& z) const;
  std::vector<float> destandardize(const std::vector<float>& z_std) const;
};

// ---------------------------------------------------------------------------
// Tape builders (shared by stage-one/stage-two training and gradient checks)
// ---------------------------------------------------------------------------

/// cloud_id: (N x 3) hand vertices -> (1 x n_z) latent.
template <class T>
int ae_encode_forward(nn::Tape<T>& tape, const nn::BoundParams<T>& p, const AeConfig& cfg,
                      int cloud_id) {
  int pooled = nn::pointnet_forward(tape, p, "enc.point", cloud_id, cfg.point_spec());
  return nn::mlp_forward(tape, p, "enc.head", pooled, cfg.enc_head_spec());
}

template <class T>
int ae_encode_params_forward(nn::Tape<T>& tape, const nn::BoundParams<T>& p, const AeConfig& cfg,
                             int params_id) {
  return nn::mlp_forward(tape, p, "enc.mlp", params_id, cfg.enc_param_spec());
}

/// z: (1 x n_z) -> 61 parameters; shape tail bounded by 5*tanh.
template <class T>
int ae_decode_forward(nn::Tape<T>& tape, const nn::BoundParams<T>& p, const AeConfig& cfg,
                      int z_id) {
  int raw = nn::mlp_forward(tape, p, "dec", z_id, cfg.decoder_spec());
  int head = tape.slice_cols(raw, 0, kHandParamDim - kHandShapeDim);
  int tail = tape.scale(tape.tanh_act(tape.slice_cols(raw, kHandParamDim - kHandShapeDim,
                                                      kHandParamDim)),
                        static_cast<T>(kShapeCoeffLimit));
  return tape.concat_cols(head, tail);
}

// Per-step scalar record sink (JSONL training logs).
using TrainLogFn = std::function<void(int step, const LossBreakdown& mean)>;

struct AeTrainResult {
  LossBreakdown final_loss;      // mean over the last logged step
  std::uint64_t checkpoint_hash; // content hash of the written blob
};

/// Stage-one training (Adam, deterministic per seed). Writes a checkpoint
/// directory: manifest.json + tensors.blob + the hand template files.
/// Throws on non-finite losses with a step/term diagnostic.
AeTrainResult train_ae(const Dataset& dataset, const AeConfig& cfg,
                       const std::filesystem::path& out_dir, const TrainLogFn& log = {});

AeModel load_ae(const std::filesystem::path& dir);

}  // namespace gf
