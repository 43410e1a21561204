#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "graspforge/autoencoder.hpp"
#include "graspforge/nn/model.hpp"

namespace gf {

// beta/alpha tables; index t runs 1..T, alpha_bar[0] == 1.
struct DiffusionSchedule {
  int steps = 0;  // T
  std::vector<double> beta;       // [0..T], beta[0] unused
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // cumulative product, alpha_bar[0] = 1

  static DiffusionSchedule linear(int steps, double beta_start, double beta_end);
  void validate() const;  // monotone betas in (0,1), alpha_bar decreasing, alpha_bar[T] < 0.01

  nlohmann::json to_json() const;
  static DiffusionSchedule from_json(const nlohmann::json& j);
};

/// Forward noising: z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
std::vector<double> q_sample(const std::vector<double>& z0, int t, const std::vector<double>& eps,
                             const DiffusionSchedule& schedule);

using DenoiserFn = std::function<std::vector<double>(const std::vector<double>& z_t, int t)>;

/// Ancestral reverse chain from z_T ~ N(0, I). `add_noise=false` gives the
/// sigma->0 deterministic variant.
std::vector<double> ddpm_sample(const DenoiserFn& eps_model, const DiffusionSchedule& schedule,
                                int dim, std::uint64_t seed, bool add_noise = true);

/// Deterministic DDIM (eta = 0) over an evenly spaced sub-schedule of
/// `num_steps` steps, 1 <= num_steps <= T.
std::vector<double> ddim_sample(const DenoiserFn& eps_model, const DiffusionSchedule& schedule,
                                int dim, int num_steps, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Object-conditioned latent denoiser
// ---------------------------------------------------------------------------

struct DiffusionConfig {
  int latent_dim = 64;                              // must match the AE N_z
  std::vector<int> cond_point_widths = {3, 32, 64, 128};  // object PointNet
  int time_dim = 32;
  int hidden1 = 128, hidden2 = 64;  // down widths; up path mirrors with skips
  int schedule_steps = 1000;
  double beta_start = 1e-4, beta_end = 0.02;
  double lr = 1e-3;
  int batch_size = 16;
  int steps = 2000;
  int object_points = 512;
  std::uint64_t seed = 2;

  static DiffusionConfig toy(int latent_dim = 64);
  static DiffusionConfig paper();

  nlohmann::json to_json() const;
  static DiffusionConfig from_json(const nlohmann::json& j);
  void validate() const;

  nn::MlpSpec cond_spec() const;
  int cond_dim() const { return cond_point_widths.back(); }
  int input_dim() const { return latent_dim + cond_dim() + time_dim; }
};

struct DiffusionModel {
  DiffusionConfig config;
  DiffusionSchedule schedule;
  NamedTensors params;

  static DiffusionModel initialize(const DiffusionConfig& cfg);

  /// PointNet embedding of a centered object cloud (row-major N x 3 floats).
  std::vector<float> embed_object(const std::vector<float>& cloud) const;

  /// eps prediction for one latent (plain forward).
  std::vector<float> predict_eps(const std::vector<float>& z_t,
                                 const std::vector<float>& obj_embedding, int t) const;

  /// DenoiserFn closure over a fixed embedding; bumps *eval_count per call.
  DenoiserFn denoiser(const std::vector<float>& obj_embedding,
                      long* eval_count = nullptr) const;
};

/// Skip-connected denoiser MLP on a tape: input [z_t || obj_emb || t_emb].
template <class T>
int denoiser_forward(nn::Tape<T>& tape, const nn::BoundParams<T>& p, const DiffusionConfig& cfg,
                     int z_t, int obj_emb, int t_emb) {
  int in = tape.concat_cols(tape.concat_cols(z_t, obj_emb), t_emb);
  int d0 = tape.relu(tape.affine(in, p("den.down0.w"), p("den.down0.b")));
  int d1 = tape.relu(tape.affine(d0, p("den.down1.w"), p("den.down1.b")));
  int b = tape.relu(tape.affine(d1, p("den.bott.w"), p("den.bott.b")));
  int u1 = tape.relu(tape.affine(tape.concat_cols(b, d1), p("den.up1.w"), p("den.up1.b")));
  int u0 = tape.relu(tape.affine(tape.concat_cols(u1, d0), p("den.up0.w"), p("den.up0.b")));
  return tape.affine(u0, p("den.out.w"), p("den.out.b"));
}

struct DiffTrainResult {
  double final_loss = 0.0;  // mean per-dimension eps MSE at the last step
  std::uint64_t checkpoint_hash = 0;
};

using DiffLogFn = std::function<void(int step, double loss)>;

/// Eps-prediction training with the autoencoder frozen; latents are
/// standardized by the AE's recorded statistics. Deterministic per seed.
DiffTrainResult train_diffusion(const AeModel& ae, std::uint64_t ae_hash, const Dataset& dataset,
                                const DiffusionConfig& cfg, const std::filesystem::path& out_dir,
                                const DiffLogFn& log = {});

DiffusionModel load_diffusion(const std::filesystem::path& dir);

}  // namespace gf
