#include "graspforge/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "graspforge/dataset.hpp"
#include "train_common.hpp"

namespace gf {

using nlohmann::json;
using nn::MlpSpec;

// ---------------------------------------------------------------------------
// Shared training helpers
// ---------------------------------------------------------------------------

namespace detail {

CenteredScene prepare_scene(const Dataset& ds, const DatasetRecord& rec,
                            const std::vector<int>& vertex_subset, int n_points,
                            std::uint64_t cloud_seed, bool with_losses) {
  CenteredScene s;
  PointCloud cloud = sample_surface(rec.object, n_points, cloud_seed);
  s.offset = cloud.centroid();
  s.obj_points.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) s.obj_points.points.push_back(p - s.offset);

  HandMesh gt_mesh = lbs_forward(ds.tmpl, rec.gt_params);
  s.gt_verts_sub.reserve(vertex_subset.size());
  for (int i : vertex_subset) s.gt_verts_sub.push_back(gt_mesh.vertices[i] - s.offset);
  s.gt_verts_sub_f.reserve(vertex_subset.size() * 3);
  for (const Vec3& v : s.gt_verts_sub)
    for (int c = 0; c < 3; ++c) s.gt_verts_sub_f.push_back(static_cast<float>(v[c]));

  s.gt_params = rec.gt_params.to_vector();
  s.gt_params[0] -= s.offset.x;
  s.gt_params[1] -= s.offset.y;
  s.gt_params[2] -= s.offset.z;

  if (with_losses) {
    s.loss_sample.gt_contact = contact_map(s.gt_verts_sub, s.obj_points);
    s.loss_sample.candidates = contact_candidates(s.obj_points, s.gt_verts_sub, true);
  }
  s.loss_sample.gt_params = s.gt_params;
  s.loss_sample.gt_verts_subset = s.gt_verts_sub;
  s.loss_sample.obj_points = &s.obj_points;
  s.loss_sample.obj_bvh = rec.object_bvh.get();
  s.loss_sample.bvh_frame_offset = s.offset;
  return s;
}

std::vector<int> sample_batch(Rng& rng, int n, int k) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  k = std::min(k, n);
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// AeConfig
// ---------------------------------------------------------------------------

AeConfig AeConfig::toy() { return AeConfig{}; }

AeConfig AeConfig::paper() {
  AeConfig c;
  c.n_z = 768;
  c.enc_point_widths = {3, 64, 128, 256};
  c.enc_param_widths = {61, 256, 256};
  c.dec_hidden = {512, 256};
  c.lr = 1e-4;
  c.batch_size = 256;
  c.steps = 20000;
  c.vertex_subsample = kHandVertexCount;
  c.object_points = 3000;
  return c;
}

void AeConfig::validate() const {
  if (n_z < 1) throw std::invalid_argument("ae config: n_z must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("ae config: batch size must be >= 1");
  if (steps < 1) throw std::invalid_argument("ae config: steps must be >= 1");
  if (vertex_subsample < 4) throw std::invalid_argument("ae config: vertex subsample too small");
  if (object_points < 8) throw std::invalid_argument("ae config: object point count too small");
  if (input_mode != "vertices" && input_mode != "params")
    throw std::invalid_argument("ae config: input_mode must be 'vertices' or 'params'");
  if (enc_point_widths.empty() || enc_point_widths.front() != 3)
    throw std::invalid_argument("ae config: point MLP must start at width 3");
  weights.validate();
}

MlpSpec AeConfig::point_spec() const {
  MlpSpec s;
  s.widths = enc_point_widths;
  s.act.assign(s.widths.size() - 1, nn::Activation::kRelu);
  return s;
}

MlpSpec AeConfig::enc_head_spec() const {
  MlpSpec s;
  s.widths = {enc_point_widths.back(), n_z};
  s.act = {nn::Activation::kIdentity};
  return s;
}

MlpSpec AeConfig::enc_param_spec() const {
  std::vector<int> w = enc_param_widths;
  w.push_back(n_z);
  return MlpSpec::dense(std::move(w));
}

MlpSpec AeConfig::decoder_spec() const {
  std::vector<int> w;
  w.push_back(n_z);
  for (int h : dec_hidden) w.push_back(h);
  w.push_back(kHandParamDim);
  return MlpSpec::dense(std::move(w));
}

json AeConfig::to_json() const {
  return {{"n_z", n_z},
          {"enc_point_widths", enc_point_widths},
          {"enc_param_widths", enc_param_widths},
          {"dec_hidden", dec_hidden},
          {"input_mode", input_mode},
          {"weights", weights.to_json()},
          {"lr", lr},
          {"batch_size", batch_size},
          {"steps", steps},
          {"seed", seed},
          {"vertex_subsample", vertex_subsample},
          {"object_points", object_points}};
}

AeConfig AeConfig::from_json(const json& j) {
  AeConfig c;
  c.n_z = j.value("n_z", c.n_z);
  c.enc_point_widths = j.value("enc_point_widths", c.enc_point_widths);
  c.enc_param_widths = j.value("enc_param_widths", c.enc_param_widths);
  c.dec_hidden = j.value("dec_hidden", c.dec_hidden);
  c.input_mode = j.value("input_mode", c.input_mode);
  if (j.contains("weights")) c.weights = LossWeights::from_json(j["weights"]);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.vertex_subsample = j.value("vertex_subsample", c.vertex_subsample);
  c.object_points = j.value("object_points", c.object_points);
  c.validate();
  return c;
}

std::vector<int> subsample_indices(int vertex_count, int budget) {
  std::vector<int> idx;
  if (budget >= vertex_count) {
    idx.resize(vertex_count);
    for (int i = 0; i < vertex_count; ++i) idx[i] = i;
    return idx;
  }
  idx.reserve(budget);
  for (int i = 0; i < budget; ++i)
    idx.push_back(static_cast<int>(static_cast<std::int64_t>(i) * vertex_count / budget));
  return idx;
}

// ---------------------------------------------------------------------------
// AeModel
// ---------------------------------------------------------------------------

AeModel AeModel::initialize(const AeConfig& cfg, const HandTemplate& tmpl) {
  cfg.validate();
  AeModel m;
  m.config = cfg;
  m.tmpl = tmpl;
  Rng rng(derive_seed(cfg.seed, detail::kSeedInit));
  if (cfg.input_mode == "vertices") {
    nn::init_mlp_params(m.params, "enc.point", cfg.point_spec(), rng);
    nn::init_mlp_params(m.params, "enc.head", cfg.enc_head_spec(), rng);
  } else {
    nn::init_mlp_params(m.params, "enc.mlp", cfg.enc_param_spec(), rng);
  }
  nn::init_mlp_params(m.params, "dec", cfg.decoder_spec(), rng);
  m.latent_mean.assign(cfg.n_z, 0.0f);
  m.latent_std.assign(cfg.n_z, 1.0f);
  return m;
}

std::vector<float> AeModel::encode(const std::vector<Vec3>& hand_vertices) const {
  if (config.input_mode != "vertices")
    throw std::logic_error("encode: model was trained with parameter input");
  if (hand_vertices.empty()) throw std::invalid_argument("encode: empty vertex set");
  std::vector<float> cloud;
  cloud.reserve(hand_vertices.size() * 3);
  for (const Vec3& v : hand_vertices)
    for (int c = 0; c < 3; ++c) cloud.push_back(static_cast<float>(v[c]));
  std::vector<float> pooled = nn::pointnet_eval(params, "enc.point", config.point_spec(), cloud);
  return nn::mlp_eval(params, "enc.head", config.enc_head_spec(), pooled);
}

std::vector<float> AeModel::encode_params(const std::vector<double>& params61) const {
  if (config.input_mode != "params")
    throw std::logic_error("encode_params: model was trained with vertex input");
  std::vector<float> x(params61.begin(), params61.end());
  return nn::mlp_eval(params, "enc.mlp", config.enc_param_spec(), x);
}

HandParams AeModel::decode(const std::vector<float>& z) const {
  if (static_cast<int>(z.size()) != config.n_z)
    throw std::invalid_argument("decode: latent size mismatch");
  std::vector<float> raw = nn::mlp_eval(params, "dec", config.decoder_spec(), z);
  std::vector<double> out(kHandParamDim);
  for (int i = 0; i < kHandParamDim - kHandShapeDim; ++i) out[i] = raw[i];
  for (int i = kHandParamDim - kHandShapeDim; i < kHandParamDim; ++i)
    out[i] = kShapeCoeffLimit * std::tanh(static_cast<double>(raw[i]));
  return HandParams::from_vector(out);
}

std::vector<float> AeModel::standardize(const std::vector<float>& z) const {
  std::vector<float> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = (z[i] - latent_mean[i]) / latent_std[i];
  return out;
}

std::vector<float> AeModel::destandardize(const std::vector<float>& z_std) const {
  std::vector<float> out(z_std.size());
  for (std::size_t i = 0; i < z_std.size(); ++i)
    out[i] = z_std[i] * latent_std[i] + latent_mean[i];
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

std::vector<float> scene_encoder_input(const detail::CenteredScene& scene, const AeConfig& cfg) {
  if (cfg.input_mode == "vertices") return scene.gt_verts_sub_f;
  return {scene.gt_params.begin(), scene.gt_params.end()};
}

}  // namespace

AeTrainResult train_ae(const Dataset& dataset, const AeConfig& cfg,
                       const std::filesystem::path& out_dir, const TrainLogFn& log) {
  cfg.validate();
  std::vector<int> train_idx = dataset.train_indices();
  if (train_idx.empty()) throw std::invalid_argument("train_ae: dataset has no training records");

  AeModel model = AeModel::initialize(cfg, dataset.tmpl);
  nn::AdamState adam(model.params, {cfg.lr, 0.9, 0.999, 1e-8});
  std::vector<int> subset = subsample_indices(dataset.tmpl.vertex_count(), cfg.vertex_subsample);

  LossBreakdown last_mean;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng batch_rng(derive_seed(derive_seed(cfg.seed, detail::kSeedBatch), step));
    std::vector<int> batch =
        detail::sample_batch(batch_rng, static_cast<int>(train_idx.size()), cfg.batch_size);

    nn::Tape<float> tape;
    nn::BoundParams<float> bound = nn::bind_params(tape, model.params, true);
    int total = tape.constant(Tensor32::scalar(0.0f));
    LossBreakdown mean;
    for (std::size_t slot = 0; slot < batch.size(); ++slot) {
      const DatasetRecord& rec = dataset.records[train_idx[batch[slot]]];
      std::uint64_t cloud_seed = derive_seed(derive_seed(cfg.seed, detail::kSeedCloud),
                                             static_cast<std::uint64_t>(step) * 1024 + slot);
      detail::CenteredScene scene =
          detail::prepare_scene(dataset, rec, subset, cfg.object_points, cloud_seed, true);

      std::vector<float> enc_in = scene_encoder_input(scene, cfg);
      int z;
      if (cfg.input_mode == "vertices") {
        int cloud = tape.constant(
            Tensor32::from({static_cast<int>(subset.size()), 3}, std::move(enc_in)));
        z = ae_encode_forward(tape, bound, cfg, cloud);
      } else {
        int pin = tape.constant(Tensor32::from({1, kHandParamDim}, std::move(enc_in)));
        z = ae_encode_params_forward(tape, bound, cfg, pin);
      }
      int pred_params = ae_decode_forward(tape, bound, cfg, z);
      int pred_verts = lbs_node(tape, dataset.tmpl, pred_params);
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
      throw std::runtime_error("train_ae: non-finite loss at step " + std::to_string(step) +
                               " (param=" + std::to_string(mean.param) +
                               ", mesh=" + std::to_string(mean.mesh) +
                               ", cmap=" + std::to_string(mean.cmap) +
                               ", penetr=" + std::to_string(mean.penetr) +
                               ", consist=" + std::to_string(mean.consist) + ")");

    tape.backward(total);
    adam.step(model.params, nn::collect_grads(tape, model.params, bound));
    last_mean = mean;
    if (log) log(step, mean);
  }

  // latent statistics over the training set (canonical clouds)
  std::vector<std::vector<float>> zs;
  zs.reserve(train_idx.size());
  for (std::size_t r = 0; r < train_idx.size(); ++r) {
    const DatasetRecord& rec = dataset.records[train_idx[r]];
    std::uint64_t cloud_seed =
        derive_seed(derive_seed(cfg.seed, detail::kSeedStats), static_cast<std::uint64_t>(r));
    detail::CenteredScene scene =
        detail::prepare_scene(dataset, rec, subset, cfg.object_points, cloud_seed, false);
    zs.push_back(cfg.input_mode == "vertices" ? model.encode(scene.gt_verts_sub)
                                              : model.encode_params(scene.gt_params));
  }
  for (int k = 0; k < cfg.n_z; ++k) {
    double m = 0.0;
    for (const auto& z : zs) m += z[k];
    m /= static_cast<double>(zs.size());
    double var = 0.0;
    for (const auto& z : zs) var += (z[k] - m) * (z[k] - m);
    var /= static_cast<double>(zs.size());
    model.latent_mean[k] = static_cast<float>(m);
    model.latent_std[k] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
  }

  // checkpoint
  NamedTensors tensors;
  for (const auto& [name, t] : model.params) tensors.add(name, t);
  tensors.add("latent_mean", Tensor32::from({cfg.n_z}, model.latent_mean));
  tensors.add("latent_std", Tensor32::from({cfg.n_z}, model.latent_std));

  json manifest;
  manifest["type"] = "ae";
  manifest["format_version"] = 1;
  manifest["config"] = cfg.to_json();
  manifest["template_hash"] = hash_hex(dataset.template_hash);
  manifest["lineage"] = json::object();

  const HandTemplate& tmpl = dataset.tmpl;
  write_checkpoint(manifest, tensors, out_dir, [&](const std::filesystem::path& stage) {
    save_template(tmpl, stage / "template.json", stage / "template.blob");
  });

  AeTrainResult result;
  result.final_loss = last_mean;
  result.checkpoint_hash = checkpoint_hash(out_dir);
  return result;
}

AeModel load_ae(const std::filesystem::path& dir) {
  Checkpoint ck = read_checkpoint(dir);
  if (ck.manifest.value("type", "") != "ae")
    throw std::runtime_error(dir.string() + ": not an autoencoder checkpoint");
  AeModel m;
  m.config = AeConfig::from_json(ck.manifest.at("config"));
  m.tmpl = load_external_template(dir / "template.json");

  auto expect = [&](const std::string& name) -> const Tensor32& {
    const Tensor32* t = ck.tensors.find(name);
    if (!t) throw std::runtime_error(dir.string() + ": checkpoint missing tensor " + name);
    return *t;
  };
  const Tensor32& lm = expect("latent_mean");
  const Tensor32& ls = expect("latent_std");
  if (lm.numel() != m.config.n_z || ls.numel() != m.config.n_z)
    throw std::runtime_error(dir.string() + ": checkpoint dimension mismatch: latent statistics");
  m.latent_mean = lm.data;
  m.latent_std = ls.data;
  for (const auto& [name, t] : ck.tensors) {
    if (name == "latent_mean" || name == "latent_std") continue;
    m.params.add(name, t);
  }
  // shape sanity against the declared architecture
  AeModel ref = AeModel::initialize(m.config, m.tmpl);
  for (const auto& [name, t] : ref.params) {
    const Tensor32* got = m.params.find(name);
    if (!got)
      throw std::runtime_error(dir.string() + ": checkpoint missing tensor " + name);
    if (got->shape != t.shape)
      throw std::runtime_error(dir.string() + ": checkpoint dimension mismatch: tensor " + name +
                               " has shape " + shape_str(got->shape) + ", expected " +
                               shape_str(t.shape));
  }
  return m;
}

}  // namespace gf
