#include "graspforge/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "graspforge/dataset.hpp"
#include "train_common.hpp"

namespace gf {

using nlohmann::json;

AdaptConfig AdaptConfig::toy() { return AdaptConfig{}; }

AdaptConfig AdaptConfig::paper() {
  AdaptConfig c;
  c.hidden = {768, 768};
  c.lr = 1e-4;
  c.batch_size = 256;
  c.steps = 10000;
  return c;
}

void AdaptConfig::validate() const {
  if (batch_size < 1 || steps < 1) throw std::invalid_argument("adapt config: train sizes");
  if (ddim_steps < 1) throw std::invalid_argument("adapt config: ddim steps must be >= 1");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("adapt config: widths must be >= 1");
  weights.validate();
}

nn::MlpSpec AdaptConfig::spec(int latent_dim) const {
  std::vector<int> w;
  w.push_back(latent_dim);
  for (int h : hidden) w.push_back(h);
  w.push_back(latent_dim);
  return nn::MlpSpec::dense(std::move(w));
}

json AdaptConfig::to_json() const {
  return {{"hidden", hidden},       {"weights", weights.to_json()}, {"lr", lr},
          {"batch_size", batch_size}, {"steps", steps},             {"ddim_steps", ddim_steps},
          {"seed", seed}};
}

AdaptConfig AdaptConfig::from_json(const json& j) {
  AdaptConfig c;
  c.hidden = j.value("hidden", c.hidden);
  if (j.contains("weights")) c.weights = LossWeights::from_json(j["weights"]);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.ddim_steps = j.value("ddim_steps", c.ddim_steps);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

AdapterModel AdapterModel::initialize(const AdaptConfig& cfg, int latent_dim) {
  cfg.validate();
  AdapterModel m;
  m.config = cfg;
  m.latent_dim = latent_dim;
  Rng rng(derive_seed(cfg.seed, detail::kSeedInit));
  nn::init_mlp_params(m.params, "adapt", cfg.spec(latent_dim), rng);
  nn::zero_final_layer(m.params, "adapt", cfg.spec(latent_dim));  // z2 == 0 at start
  return m;
}

std::vector<float> AdapterModel::apply(const std::vector<float>& z1) const {
  if (static_cast<int>(z1.size()) != latent_dim)
    throw std::invalid_argument("adapter: latent size mismatch");
  return nn::mlp_eval(params, "adapt", config.spec(latent_dim), z1);
}

std::pair<HandParams, HandMesh> refine_and_decode(const AeModel& ae, const AdapterModel& adapter,
                                                  const std::vector<float>& z1) {
  std::vector<float> z2 = adapter.apply(z1);
  std::vector<float> z(z1.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = z1[i] + z2[i];
  HandParams params = ae.decode(z);
  HandMesh mesh = lbs_forward(ae.tmpl, params);
  return {params, mesh};
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

AdaptTrainResult train_adaptation(const AeModel& ae, std::uint64_t ae_hash,
                                  const DiffusionModel& diff, std::uint64_t diff_hash,
                                  const Dataset& dataset, const AdaptConfig& cfg,
                                  const std::filesystem::path& out_dir, const TrainLogFn& log) {
  cfg.validate();
  std::vector<std::vector<int>> groups = dataset.object_groups("train");
  if (groups.empty()) throw std::invalid_argument("train_adaptation: no training objects");

  AdapterModel model = AdapterModel::initialize(cfg, ae.config.n_z);
  nn::AdamState adam(model.params, {cfg.lr, 0.9, 0.999, 1e-8});
  std::vector<int> subset =
      subsample_indices(dataset.tmpl.vertex_count(), ae.config.vertex_subsample);
  nn::MlpSpec adapter_spec = cfg.spec(ae.config.n_z);

  LossBreakdown last_mean;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng batch_rng(derive_seed(derive_seed(cfg.seed, detail::kSeedBatch), step));
    std::vector<int> batch =
        detail::sample_batch(batch_rng, static_cast<int>(groups.size()), cfg.batch_size);

    nn::Tape<float> tape;
    nn::BoundParams<float> adapt_bound = nn::bind_params(tape, model.params, true);
    nn::BoundParams<float> ae_bound = nn::bind_params(tape, ae.params, false);  // frozen
    int total = tape.constant(Tensor32::scalar(0.0f));
    LossBreakdown mean;

    for (std::size_t slot = 0; slot < batch.size(); ++slot) {
      const std::vector<int>& group = groups[batch[slot]];
      const DatasetRecord& first = dataset.records[group.front()];
      std::uint64_t item_seed = derive_seed(derive_seed(cfg.seed, detail::kSeedCloud),
                                            static_cast<std::uint64_t>(step) * 1024 + slot);

      // fresh DDIM sample conditioned on the object
      detail::CenteredScene probe =
          detail::prepare_scene(dataset, first, subset, diff.config.object_points, item_seed, false);
      std::vector<float> cloud_f;
      cloud_f.reserve(probe.obj_points.size() * 3);
      for (const Vec3& p : probe.obj_points.points)
        for (int c = 0; c < 3; ++c) cloud_f.push_back(static_cast<float>(p[c]));
      std::vector<float> emb = diff.embed_object(cloud_f);
      std::vector<double> z1_std =
          ddim_sample(diff.denoiser(emb), diff.schedule, ae.config.n_z, cfg.ddim_steps,
                      derive_seed(item_seed, detail::kSeedNoise));
      std::vector<float> z1 =
          ae.destandardize(std::vector<float>(z1_std.begin(), z1_std.end()));

      // pair against the closest ground-truth grasp of this object
      int best_rec = group.front();
      if (group.size() > 1) {
        HandParams p0 = ae.decode(z1);
        std::vector<Vec3> kp0 = keypoints(ae.tmpl, lbs_forward(ae.tmpl, p0).vertices);
        double best = 1e300;
        for (int rec_idx : group) {
          HandParams gt = dataset.records[rec_idx].gt_params;
          gt.set_translation(gt.translation() - probe.offset);
          std::vector<Vec3> kg = keypoints(ae.tmpl, lbs_forward(ae.tmpl, gt).vertices);
          double d = 0.0;
          for (int k = 0; k < kHandKeypoints; ++k) d += norm(kp0[k] - kg[k]);
          if (d < best) {
            best = d;
            best_rec = rec_idx;
          }
        }
      }
      detail::CenteredScene scene = detail::prepare_scene(dataset, dataset.records[best_rec],
                                                          subset, diff.config.object_points,
                                                          item_seed, true);

      int z1_id = tape.constant(Tensor32::from({1, ae.config.n_z}, z1));
      int z2_id = nn::mlp_forward(tape, adapt_bound, "adapt", z1_id, adapter_spec);
      int z_id = tape.add(z1_id, z2_id);
      int pred_params = ae_decode_forward(tape, ae_bound, ae.config, z_id);
      int pred_verts = lbs_node(tape, ae.tmpl, pred_params);
      GraspLossIds<float> ids =
          grasp_loss_nodes(tape, pred_params, pred_verts, subset, scene.loss_sample, cfg.weights);
      total = tape.add(total, ids.total);

      LossBreakdown b = ids.values(tape);
      mean.param += b.param;
      mean.mesh += b.mesh;
      mean.cmap += b.cmap;
      mean.penetr += b.penetr;
      mean.consist += b.consist;
      mean.total += b.total;
    }
    total = tape.scale(total, 1.0f / static_cast<float>(batch.size()));
    double bs = static_cast<double>(batch.size());
    mean.param /= bs;
    mean.mesh /= bs;
    mean.cmap /= bs;
    mean.penetr /= bs;
    mean.consist /= bs;
    mean.total /= bs;
    if (!std::isfinite(mean.total))
      throw std::runtime_error("train_adaptation: non-finite loss at step " +
                               std::to_string(step));
    tape.backward(total);
    adam.step(model.params, nn::collect_grads(tape, model.params, adapt_bound));
    last_mean = mean;
    if (log) log(step, mean);
  }

  NamedTensors tensors;
  for (const auto& [name, t] : model.params) tensors.add(name, t);
  json manifest;
  manifest["type"] = "adapt";
  manifest["format_version"] = 1;
  manifest["config"] = cfg.to_json();
  manifest["latent_dim"] = ae.config.n_z;
  manifest["lineage"] = {{"ae", hash_hex(ae_hash)}, {"diffusion", hash_hex(diff_hash)}};
  write_checkpoint(manifest, tensors, out_dir);

  AdaptTrainResult r;
  r.final_loss = last_mean;
  r.checkpoint_hash = checkpoint_hash(out_dir);
  return r;
}

AdapterModel load_adapter(const std::filesystem::path& dir) {
  Checkpoint ck = read_checkpoint(dir);
  if (ck.manifest.value("type", "") != "adapt")
    throw std::runtime_error(dir.string() + ": not an adaptation checkpoint");
  AdapterModel m;
  m.config = AdaptConfig::from_json(ck.manifest.at("config"));
  m.latent_dim = ck.manifest.at("latent_dim").get<int>();
  AdapterModel ref = AdapterModel::initialize(m.config, m.latent_dim);
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
