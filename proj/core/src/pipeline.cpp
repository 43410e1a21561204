#include "graspforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "graspforge/dataset.hpp"
#include "graspforge/rng.hpp"

namespace gf {

using nlohmann::json;
namespace fs = std::filesystem;

Bundle Bundle::load(const fs::path& dir, bool require_adapter) {
  Bundle b;
  b.ae = load_ae(dir / "ae");
  b.ae_hash = checkpoint_hash(dir / "ae");
  b.diffusion = load_diffusion(dir / "diffusion");
  b.diffusion_hash = checkpoint_hash(dir / "diffusion");
  if (b.diffusion.config.latent_dim != b.ae.config.n_z)
    throw std::runtime_error("bundle: diffusion latent dim " +
                             std::to_string(b.diffusion.config.latent_dim) +
                             " does not match AE n_z " + std::to_string(b.ae.config.n_z));

  Checkpoint diff_ck = read_checkpoint(dir / "diffusion");
  if (lineage_mismatch(diff_ck.manifest, "ae", hash_hex(b.ae_hash)))
    b.warnings.push_back("diffusion checkpoint was trained against a different AE (lineage hash mismatch)");

  fs::path adapt_dir = dir / "adapt";
  if (fs::exists(adapt_dir)) {
    b.adapter = load_adapter(adapt_dir);
    if (b.adapter->latent_dim != b.ae.config.n_z)
      throw std::runtime_error("bundle: adapter latent dim mismatch");
    Checkpoint ck = read_checkpoint(adapt_dir);
    if (lineage_mismatch(ck.manifest, "ae", hash_hex(b.ae_hash)))
      b.warnings.push_back("adapter was trained against a different AE (lineage hash mismatch)");
    if (lineage_mismatch(ck.manifest, "diffusion", hash_hex(b.diffusion_hash)))
      b.warnings.push_back(
          "adapter was trained against a different diffusion model (lineage hash mismatch)");
  } else if (require_adapter) {
    throw std::runtime_error("bundle: missing adapt/ checkpoint in " + dir.string() +
                             " (use the no-adapter mode to skip stage two)");
  }
  return b;
}

std::vector<GeneratedGrasp> generate(const Bundle& bundle, const TriMesh& object, int count,
                                     int ddim_steps, std::uint64_t seed, bool use_adapter) {
  object.validate();
  if (count < 1) throw std::invalid_argument("generate: count must be >= 1");
  if (ddim_steps < 1 || ddim_steps > bundle.diffusion.schedule.steps)
    throw std::invalid_argument("generate: ddim steps must be in [1, T]");
  if (use_adapter && !bundle.adapter)
    throw std::invalid_argument("generate: bundle has no adapter checkpoint");
  MeshBvh obj_bvh(object);
  if (!obj_bvh.watertight()) throw std::invalid_argument("generate: object must be watertight");

  const int n_pts = bundle.diffusion.config.object_points;
  std::vector<GeneratedGrasp> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    GeneratedGrasp g;
    g.sample_seed = derive_seed(seed, static_cast<std::uint64_t>(i));

    PointCloud cloud = sample_surface(object, n_pts, derive_seed(g.sample_seed, 0xc1));
    Vec3 offset = cloud.centroid();
    std::vector<float> cloud_f;
    cloud_f.reserve(cloud.size() * 3);
    for (const Vec3& p : cloud.points) {
      Vec3 q = p - offset;
      cloud_f.push_back(static_cast<float>(q.x));
      cloud_f.push_back(static_cast<float>(q.y));
      cloud_f.push_back(static_cast<float>(q.z));
    }
    std::vector<float> emb = bundle.diffusion.embed_object(cloud_f);

    std::vector<double> z1_std =
        ddim_sample(bundle.diffusion.denoiser(emb, &g.denoiser_evals), bundle.diffusion.schedule,
                    bundle.ae.config.n_z, ddim_steps, derive_seed(g.sample_seed, 0xe1));
    std::vector<float> z1 =
        bundle.ae.destandardize(std::vector<float>(z1_std.begin(), z1_std.end()));

    std::vector<float> z = z1;
    if (use_adapter) {
      std::vector<float> z2 = bundle.adapter->apply(z1);
      for (std::size_t k = 0; k < z.size(); ++k) z[k] = z1[k] + z2[k];
    }
    g.params = bundle.ae.decode(z);
    g.params.set_translation(g.params.translation() + offset);  // back to object frame
    g.mesh = lbs_forward(bundle.ae.tmpl, g.params);
    for (const Vec3& v : g.mesh.vertices)
      if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z))
        throw std::runtime_error("generate: non-finite mesh vertex");
    auto t1 = std::chrono::steady_clock::now();
    g.latency_s = std::chrono::duration<double>(t1 - t0).count();
    out.push_back(std::move(g));
  }
  return out;
}

std::string hardware_descriptor() {
  std::string model = "unknown-cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      std::size_t colon = line.find(':');
      if (colon != std::string::npos) {
        model = line.substr(colon + 1);
        while (!model.empty() && model.front() == ' ') model.erase(model.begin());
      }
      break;
    }
  }
  return model;
}

json BenchmarkReport::to_json() const {
  return {{"object_count", object_count},   {"per_object", per_object},
          {"ddim_steps", ddim_steps},       {"mean_latency_s", mean_latency_s},
          {"median_latency_s", median_latency_s}, {"hardware", hardware},
          {"seed", seed}};
}

BenchmarkReport run_benchmark(const Bundle& bundle, int object_count, int per_object,
                              int ddim_steps, std::uint64_t seed) {
  if (object_count < 1) throw std::invalid_argument("empty benchmark set");
  if (per_object < 1) throw std::invalid_argument("benchmark: per-object count must be >= 1");

  std::vector<TriMesh> objects = make_objects(object_count, derive_seed(seed, 0xbe));
  std::vector<double> latencies;
  latencies.reserve(static_cast<std::size_t>(object_count) * per_object);
  bool use_adapter = bundle.adapter.has_value();
  for (int oi = 0; oi < object_count; ++oi) {
    auto grasps =
        generate(bundle, objects[oi], per_object, ddim_steps, derive_seed(seed, oi), use_adapter);
    for (const auto& g : grasps) latencies.push_back(g.latency_s);
  }

  BenchmarkReport r;
  r.object_count = object_count;
  r.per_object = per_object;
  r.ddim_steps = ddim_steps;
  r.seed = seed;
  r.hardware = hardware_descriptor();
  double sum = 0.0;
  for (double l : latencies) sum += l;
  r.mean_latency_s = sum / static_cast<double>(latencies.size());
  std::vector<double> sorted = latencies;
  std::sort(sorted.begin(), sorted.end());
  r.median_latency_s = sorted[sorted.size() / 2];
  return r;
}

GraspReport evaluate_bundle(const Bundle& bundle, const std::vector<TriMesh>& objects,
                            int per_object, int ddim_steps, std::uint64_t seed, bool use_adapter,
                            const SimParams& sim) {
  GraspGenFn gen = [&](const TriMesh& object, int count, int object_index) {
    auto grasps = generate(bundle, object, count, ddim_steps,
                           derive_seed(seed, static_cast<std::uint64_t>(object_index)),
                           use_adapter);
    std::vector<GraspForMetrics> out;
    out.reserve(grasps.size());
    for (auto& g : grasps) {
      GraspForMetrics m;
      m.keypoints = keypoints(bundle.ae.tmpl, g.mesh.vertices);
      m.hand = g.mesh.to_mesh();
      out.push_back(std::move(m));
    }
    return out;
  };
  GraspReport report = evaluate_set(gen, objects, per_object, derive_seed(seed, 0xd1), sim);
  report.config = {{"seed", seed},
                   {"ddim_steps", ddim_steps},
                   {"per_object", per_object},
                   {"use_adapter", use_adapter},
                   {"object_count", static_cast<int>(objects.size())}};
  return report;
}

}  // namespace gf
