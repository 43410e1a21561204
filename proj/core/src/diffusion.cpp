#include "graspforge/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "graspforge/dataset.hpp"
#include "train_common.hpp"

namespace gf {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

DiffusionSchedule DiffusionSchedule::linear(int steps, double beta_start, double beta_end) {
  DiffusionSchedule s;
  s.steps = steps;
  s.beta.assign(steps + 1, 0.0);
  s.alpha.assign(steps + 1, 1.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    double frac = steps > 1 ? static_cast<double>(t - 1) / (steps - 1) : 0.0;
    s.beta[t] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  s.validate();
  return s;
}

void DiffusionSchedule::validate() const {
  if (steps < 1) throw std::invalid_argument("diffusion schedule: T must be >= 1");
  if (static_cast<int>(beta.size()) != steps + 1 || static_cast<int>(alpha_bar.size()) != steps + 1)
    throw std::invalid_argument("diffusion schedule: table size mismatch");
  for (int t = 1; t <= steps; ++t) {
    if (!(beta[t] > 0.0 && beta[t] < 1.0))
      throw std::invalid_argument("diffusion schedule: beta out of (0,1)");
    if (t > 1 && beta[t] < beta[t - 1])
      throw std::invalid_argument("diffusion schedule: betas must be non-decreasing");
    if (!(alpha_bar[t] < alpha_bar[t - 1]))
      throw std::invalid_argument("diffusion schedule: alpha_bar must strictly decrease");
  }
  if (!(alpha_bar[steps] < 0.01))
    throw std::invalid_argument("diffusion schedule: alpha_bar at T must be < 0.01");
}

json DiffusionSchedule::to_json() const {
  return {{"steps", steps}, {"beta_start", beta[1]}, {"beta_end", beta[steps]}};
}

DiffusionSchedule DiffusionSchedule::from_json(const json& j) {
  return linear(j.at("steps").get<int>(), j.at("beta_start").get<double>(),
                j.at("beta_end").get<double>());
}

std::vector<double> q_sample(const std::vector<double>& z0, int t, const std::vector<double>& eps,
                             const DiffusionSchedule& schedule) {
  if (t < 1 || t > schedule.steps) throw std::invalid_argument("q_sample: t out of range");
  if (z0.size() != eps.size()) throw std::invalid_argument("q_sample: size mismatch");
  double a = std::sqrt(schedule.alpha_bar[t]);
  double b = std::sqrt(1.0 - schedule.alpha_bar[t]);
  std::vector<double> out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

std::vector<double> ddpm_sample(const DenoiserFn& eps_model, const DiffusionSchedule& schedule,
                                int dim, std::uint64_t seed, bool add_noise) {
  Rng rng(seed);
  std::vector<double> z(dim);
  for (double& v : z) v = rng.normal();

  for (int t = schedule.steps; t >= 1; --t) {
    std::vector<double> eps = eps_model(z, t);
    double abar = schedule.alpha_bar[t];
    double coeff = schedule.beta[t] / std::sqrt(1.0 - abar);
    double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha[t]);
    for (int i = 0; i < dim; ++i) z[i] = inv_sqrt_alpha * (z[i] - coeff * eps[i]);
    if (add_noise && t > 1) {
      double var = (1.0 - schedule.alpha_bar[t - 1]) / (1.0 - abar) * schedule.beta[t];
      double sigma = std::sqrt(var);
      for (int i = 0; i < dim; ++i) z[i] += sigma * rng.normal();
    }
  }
  return z;
}

std::vector<double> ddim_sample(const DenoiserFn& eps_model, const DiffusionSchedule& schedule,
                                int dim, int num_steps, std::uint64_t seed) {
  if (num_steps < 1 || num_steps > schedule.steps)
    throw std::invalid_argument("ddim: step count must be in [1, T]");
  Rng rng(seed);
  std::vector<double> z(dim);
  for (double& v : z) v = rng.normal();

  // evenly spaced sub-schedule T = t_0 > t_1 > ... > t_N = 0
  std::vector<int> ts(num_steps + 1);
  for (int k = 0; k <= num_steps; ++k)
    ts[k] = static_cast<int>(schedule.steps -
                             static_cast<std::int64_t>(k) * schedule.steps / num_steps);

  for (int k = 0; k < num_steps; ++k) {
    int t_hi = ts[k], t_lo = ts[k + 1];
    std::vector<double> eps = eps_model(z, t_hi);
    double a_hi = schedule.alpha_bar[t_hi];
    double a_lo = schedule.alpha_bar[t_lo];
    double sa_hi = std::sqrt(a_hi), sa_lo = std::sqrt(a_lo);
    double sb_hi = std::sqrt(1.0 - a_hi), sb_lo = std::sqrt(1.0 - a_lo);
    for (int i = 0; i < dim; ++i) {
      double x0 = (z[i] - sb_hi * eps[i]) / sa_hi;
      z[i] = sa_lo * x0 + sb_lo * eps[i];
    }
  }
  return z;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

DiffusionConfig DiffusionConfig::toy(int latent) {
  DiffusionConfig c;
  c.latent_dim = latent;
  return c;
}

DiffusionConfig DiffusionConfig::paper() {
  DiffusionConfig c;
  c.latent_dim = 768;
  c.cond_point_widths = {3, 64, 128, 256};
  c.time_dim = 128;
  c.hidden1 = 1024;
  c.hidden2 = 512;
  c.lr = 1e-4;
  c.batch_size = 256;
  c.steps = 50000;
  c.object_points = 3000;
  return c;
}

void DiffusionConfig::validate() const {
  if (latent_dim < 1) throw std::invalid_argument("diffusion config: latent dim must be >= 1");
  if (time_dim < 2 || time_dim % 2 != 0)
    throw std::invalid_argument("diffusion config: time dim must be even and >= 2");
  if (hidden1 < 1 || hidden2 < 1) throw std::invalid_argument("diffusion config: bad widths");
  if (cond_point_widths.empty() || cond_point_widths.front() != 3)
    throw std::invalid_argument("diffusion config: conditioner must start at width 3");
  if (schedule_steps < 1) throw std::invalid_argument("diffusion config: schedule steps");
  if (batch_size < 1 || steps < 1) throw std::invalid_argument("diffusion config: train sizes");
}

nn::MlpSpec DiffusionConfig::cond_spec() const {
  nn::MlpSpec s;
  s.widths = cond_point_widths;
  s.act.assign(s.widths.size() - 1, nn::Activation::kRelu);
  return s;
}

json DiffusionConfig::to_json() const {
  return {{"latent_dim", latent_dim},
          {"cond_point_widths", cond_point_widths},
          {"time_dim", time_dim},
          {"hidden1", hidden1},
          {"hidden2", hidden2},
          {"schedule_steps", schedule_steps},
          {"beta_start", beta_start},
          {"beta_end", beta_end},
          {"lr", lr},
          {"batch_size", batch_size},
          {"steps", steps},
          {"object_points", object_points},
          {"seed", seed}};
}

DiffusionConfig DiffusionConfig::from_json(const json& j) {
  DiffusionConfig c;
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.cond_point_widths = j.value("cond_point_widths", c.cond_point_widths);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.hidden1 = j.value("hidden1", c.hidden1);
  c.hidden2 = j.value("hidden2", c.hidden2);
  c.schedule_steps = j.value("schedule_steps", c.schedule_steps);
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_end = j.value("beta_end", c.beta_end);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.object_points = j.value("object_points", c.object_points);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

DiffusionModel DiffusionModel::initialize(const DiffusionConfig& cfg) {
  cfg.validate();
  DiffusionModel m;
  m.config = cfg;
  m.schedule = DiffusionSchedule::linear(cfg.schedule_steps, cfg.beta_start, cfg.beta_end);
  Rng rng(derive_seed(cfg.seed, detail::kSeedInit));

  nn::init_mlp_params(m.params, "cond", cfg.cond_spec(), rng);
  auto relu = nn::Activation::kRelu;
  auto add_layer = [&](const std::string& name, int out, int in, nn::Activation act) {
    m.params.add(name + ".w", nn::init_weight(out, in, act, rng));
    m.params.add(name + ".b", Tensor32::zeros({out}));
  };
  int in = cfg.input_dim();
  add_layer("den.down0", cfg.hidden1, in, relu);
  add_layer("den.down1", cfg.hidden2, cfg.hidden1, relu);
  add_layer("den.bott", cfg.hidden2, cfg.hidden2, relu);
  add_layer("den.up1", cfg.hidden1, cfg.hidden2 + cfg.hidden2, relu);
  add_layer("den.up0", cfg.hidden1, cfg.hidden1 + cfg.hidden1, relu);
  add_layer("den.out", cfg.latent_dim, cfg.hidden1, nn::Activation::kIdentity);
  return m;
}

std::vector<float> DiffusionModel::embed_object(const std::vector<float>& cloud) const {
  return nn::pointnet_eval(params, "cond", config.cond_spec(), cloud);
}

std::vector<float> DiffusionModel::predict_eps(const std::vector<float>& z_t,
                                               const std::vector<float>& obj_embedding,
                                               int t) const {
  if (static_cast<int>(z_t.size()) != config.latent_dim)
    throw std::invalid_argument("predict_eps: latent size mismatch");
  if (static_cast<int>(obj_embedding.size()) != config.cond_dim())
    throw std::invalid_argument("predict_eps: embedding size mismatch");

  std::vector<float> temb = nn::time_embedding(t, config.time_dim);
  std::vector<float> x;
  x.reserve(config.input_dim());
  x.insert(x.end(), z_t.begin(), z_t.end());
  x.insert(x.end(), obj_embedding.begin(), obj_embedding.end());
  x.insert(x.end(), temb.begin(), temb.end());

  auto layer = [&](const std::string& name, const std::vector<float>& v, bool act) {
    const Tensor32& w = params.get(name + ".w");
    const Tensor32& b = params.get(name + ".b");
    std::vector<float> y(w.rows());
    for (int o = 0; o < w.rows(); ++o) {
      float acc = b.data[o];
      const float* wr = &w.data[static_cast<std::size_t>(o) * w.cols()];
      for (int k = 0; k < w.cols(); ++k) acc += wr[k] * v[k];
      y[o] = act && acc < 0.0f ? 0.0f : acc;
    }
    return y;
  };
  auto cat = [](const std::vector<float>& a, const std::vector<float>& b) {
    std::vector<float> y;
    y.reserve(a.size() + b.size());
    y.insert(y.end(), a.begin(), a.end());
    y.insert(y.end(), b.begin(), b.end());
    return y;
  };

  std::vector<float> d0 = layer("den.down0", x, true);
  std::vector<float> d1 = layer("den.down1", d0, true);
  std::vector<float> b = layer("den.bott", d1, true);
  std::vector<float> u1 = layer("den.up1", cat(b, d1), true);
  std::vector<float> u0 = layer("den.up0", cat(u1, d0), true);
  return layer("den.out", u0, false);
}

DenoiserFn DiffusionModel::denoiser(const std::vector<float>& obj_embedding,
                                    long* eval_count) const {
  return [this, obj_embedding, eval_count](const std::vector<double>& z, int t) {
    if (eval_count) ++*eval_count;
    std::vector<float> zf(z.begin(), z.end());
    std::vector<float> ef = predict_eps(zf, obj_embedding, t);
    return std::vector<double>(ef.begin(), ef.end());
  };
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

DiffTrainResult train_diffusion(const AeModel& ae, std::uint64_t ae_hash, const Dataset& dataset,
                                const DiffusionConfig& cfg, const std::filesystem::path& out_dir,
                                const DiffLogFn& log) {
  cfg.validate();
  if (cfg.latent_dim != ae.config.n_z)
    throw std::invalid_argument("train_diffusion: latent dim does not match the AE (" +
                                std::to_string(cfg.latent_dim) + " vs " +
                                std::to_string(ae.config.n_z) + ")");
  std::vector<int> train_idx = dataset.train_indices();
  if (train_idx.empty()) throw std::invalid_argument("train_diffusion: no training records");

  DiffusionModel model = DiffusionModel::initialize(cfg);
  nn::AdamState adam(model.params, {cfg.lr, 0.9, 0.999, 1e-8});
  std::vector<int> subset =
      subsample_indices(dataset.tmpl.vertex_count(), ae.config.vertex_subsample);

  double last_loss = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng batch_rng(derive_seed(derive_seed(cfg.seed, detail::kSeedBatch), step));
    std::vector<int> batch =
        detail::sample_batch(batch_rng, static_cast<int>(train_idx.size()), cfg.batch_size);
    Rng noise_rng(derive_seed(derive_seed(cfg.seed, detail::kSeedNoise), step));

    nn::Tape<float> tape;
    nn::BoundParams<float> bound = nn::bind_params(tape, model.params, true);
    int total = tape.constant(Tensor32::scalar(0.0f));
    for (std::size_t slot = 0; slot < batch.size(); ++slot) {
      const DatasetRecord& rec = dataset.records[train_idx[batch[slot]]];
      std::uint64_t cloud_seed = derive_seed(derive_seed(cfg.seed, detail::kSeedCloud),
                                             static_cast<std::uint64_t>(step) * 1024 + slot);
      detail::CenteredScene scene =
          detail::prepare_scene(dataset, rec, subset, cfg.object_points, cloud_seed, false);

      // frozen-AE latent, standardized
      std::vector<float> z0 = ae.config.input_mode == "vertices"
                                  ? ae.encode(scene.gt_verts_sub)
                                  : ae.encode_params(scene.gt_params);
      z0 = ae.standardize(z0);

      int t = 1 + static_cast<int>(noise_rng.uniform_index(
                      static_cast<std::uint64_t>(model.schedule.steps)));
      std::vector<double> eps(cfg.latent_dim);
      for (double& v : eps) v = noise_rng.normal();
      std::vector<double> z0d(z0.begin(), z0.end());
      std::vector<double> zt = q_sample(z0d, t, eps, model.schedule);

      int cloud_id = tape.constant(Tensor32::from(
          {static_cast<int>(scene.obj_points.size()), 3}, [&] {
            std::vector<float> flat;
            flat.reserve(scene.obj_points.size() * 3);
            for (const Vec3& p : scene.obj_points.points)
              for (int c = 0; c < 3; ++c) flat.push_back(static_cast<float>(p[c]));
            return flat;
          }()));
      int emb = nn::pointnet_forward(tape, bound, "cond", cloud_id, cfg.cond_spec());
      int zt_id = tape.constant(
          Tensor32::from({1, cfg.latent_dim}, std::vector<float>(zt.begin(), zt.end())));
      int temb_id = tape.constant(
          Tensor32::from({1, cfg.time_dim}, nn::time_embedding(t, cfg.time_dim)));
      int eps_hat = denoiser_forward(tape, bound, cfg, zt_id, emb, temb_id);
      int eps_id = tape.constant(
          Tensor32::from({1, cfg.latent_dim}, std::vector<float>(eps.begin(), eps.end())));
      total = tape.add(total, tape.mse(eps_hat, eps_id));
    }
    total = tape.scale(total, 1.0f / static_cast<float>(batch.size()));
    last_loss = tape.value(total).data[0];
    if (!std::isfinite(last_loss))
      throw std::runtime_error("train_diffusion: non-finite loss at step " + std::to_string(step));
    tape.backward(total);
    adam.step(model.params, nn::collect_grads(tape, model.params, bound));
    if (log) log(step, last_loss);
  }

  NamedTensors tensors;
  for (const auto& [name, t] : model.params) tensors.add(name, t);
  json manifest;
  manifest["type"] = "diffusion";
  manifest["format_version"] = 1;
  manifest["config"] = cfg.to_json();
  manifest["schedule"] = model.schedule.to_json();
  manifest["lineage"] = {{"ae", hash_hex(ae_hash)}};
  write_checkpoint(manifest, tensors, out_dir);

  DiffTrainResult r;
  r.final_loss = last_loss;
  r.checkpoint_hash = checkpoint_hash(out_dir);
  return r;
}

DiffusionModel load_diffusion(const std::filesystem::path& dir) {
  Checkpoint ck = read_checkpoint(dir);
  if (ck.manifest.value("type", "") != "diffusion")
    throw std::runtime_error(dir.string() + ": not a diffusion checkpoint");
  DiffusionModel m;
  m.config = DiffusionConfig::from_json(ck.manifest.at("config"));
  m.schedule = DiffusionSchedule::from_json(ck.manifest.at("schedule"));
  DiffusionModel ref = DiffusionModel::initialize(m.config);
  for (const auto& [name, t] : ref.params) {
    const Tensor32* got = ck.tensors.find(name);
    if (!got) throw std::runtime_error(dir.string() + ": checkpoint missing tensor " + name);
    if (got->shape != t.shape)
      throw std::runtime_error(dir.string() + ": checkpoint dimension mismatch: tensor " + name +
                               " has shape " + shape_str(got->shape) + ", expected " +
                               shape_str(t.shape));
    m.params.add(name, *got);
  }
  return m;
}

}  // namespace gf
