#include "graspforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "graspforge/losses_ad.hpp"
#include "graspforge/mesh_io.hpp"
#include "graspforge/metrics.hpp"
#include "graspforge/nn/model.hpp"
#include "graspforge/persistence.hpp"
#include "graspforge/primitives.hpp"
#include "graspforge/rng.hpp"

namespace gf {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<int> Dataset::train_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(records.size()); ++i)
    if (records[i].split == "train") idx.push_back(i);
  return idx;
}

std::vector<int> Dataset::test_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(records.size()); ++i)
    if (records[i].split == "test") idx.push_back(i);
  return idx;
}

std::vector<std::vector<int>> Dataset::object_groups(const std::string& split) const {
  std::vector<std::vector<int>> groups;
  std::vector<int> object_to_group;
  for (int i = 0; i < static_cast<int>(records.size()); ++i) {
    if (records[i].split != split) continue;
    int obj = records[i].object_index;
    while (static_cast<int>(object_to_group.size()) <= obj) object_to_group.push_back(-1);
    if (object_to_group[obj] < 0) {
      object_to_group[obj] = static_cast<int>(groups.size());
      groups.emplace_back();
    }
    groups[object_to_group[obj]].push_back(i);
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Objects
// ---------------------------------------------------------------------------

namespace {

void center_on_origin(TriMesh& m) {
  Aabb b = m.bounds();
  translate_mesh(m, -b.center());
}

Mat3 random_rotation(Rng& rng) {
  Vec3 axis = normalized(Vec3{rng.normal(), rng.normal(), rng.normal()});
  return rotation_axis_angle(axis * rng.uniform(0.0, 3.14159265358979323846));
}

}  // namespace

std::vector<TriMesh> make_objects(int count, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("make_objects: negative count");
  std::vector<TriMesh> out;
  out.reserve(count);
  const double cm = 0.01;
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    TriMesh m;
    switch (i % 5) {
      case 0:
        m = make_icosphere(rng.uniform(2.0, 6.0) * cm, 2);
        break;
      case 1:
        m = make_box({rng.uniform(4.0, 10.0) * cm, rng.uniform(4.0, 10.0) * cm,
                      rng.uniform(4.0, 10.0) * cm});
        break;
      case 2:
        m = make_cylinder(rng.uniform(2.0, 4.5) * cm, rng.uniform(4.0, 11.0) * cm, 24);
        break;
      case 3:
        m = make_capsule(rng.uniform(1.5, 3.0) * cm, rng.uniform(1.0, 5.0) * cm, 12, 12);
        break;
      default: {  // compound of two primitives, overlapping
        double r = rng.uniform(1.8, 3.0) * cm;
        m = make_icosphere(r, 2);
        TriMesh part = make_box({rng.uniform(3.0, 6.0) * cm, rng.uniform(2.0, 4.0) * cm,
                                 rng.uniform(2.0, 4.0) * cm});
        translate_mesh(part, {r * 0.8, 0, 0});
        append_mesh(m, part);
        break;
      }
    }
    transform_mesh(m, random_rotation(rng), {});
    center_on_origin(m);
    m.validate();
    if (!is_watertight(m)) throw std::logic_error("make_objects produced a non-watertight mesh");
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ground-truth grasp fitting
// ---------------------------------------------------------------------------

namespace {

// Aim the hand's +x axis at `target_dir` and roll about the approach axis.
Vec3 aim_root_pose(const Vec3& target_dir, double roll) {
  Mat3 aim;
  {
    Vec3 f = normalized(target_dir);
    Vec3 axis = cross(Vec3{1, 0, 0}, f);
    double s = norm(axis), c = dot(Vec3{1, 0, 0}, f);
    if (s < 1e-12)
      aim = c > 0 ? Mat3::identity() : rotation_axis_angle({0, 0, 3.14159265358979323846});
    else
      aim = rotation_axis_angle(normalized(axis) * std::atan2(s, c));
  }
  Mat3 r = aim * rotation_axis_angle(Vec3{roll, 0, 0});
  // back to axis-angle
  double tr = r(0, 0) + r(1, 1) + r(2, 2);
  double cos_t = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  double theta = std::acos(cos_t);
  if (theta < 1e-9) return {0, 0, 0};
  Vec3 axis{r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
  double n = norm(axis);
  if (n < 1e-12) {  // theta ~ pi: extract axis from diagonal
    int k = 0;
    if (r(1, 1) > r(0, 0)) k = 1;
    if (r(2, 2) > r(k, k)) k = 2;
    Vec3 a{};
    a[k] = std::sqrt(std::max(0.0, (r(k, k) + 1.0) / 2.0));
    for (int j = 0; j < 3; ++j)
      if (j != k) a[j] = r(k, j) / (2.0 * a[k]);
    return a * theta;
  }
  return axis * (theta / n);
}

HandParams initial_guess(const TriMesh& obj, Rng& rng, double standoff) {
  Vec3 dir = normalized(Vec3{rng.normal(), rng.normal(), rng.normal()});
  Vec3 wrist = obj.bounds().center() + dir * standoff;
  HandParams p;
  p.set_translation(wrist);
  p.set_joint_pose(0, aim_root_pose(-dir, rng.uniform(0.0, 6.28318530717958648)));
  for (int f = 0; f < 5; ++f) {  // light initial curl
    p.set_joint_pose(1 + 3 * f, {0, 0.35, 0});
    p.set_joint_pose(2 + 3 * f, {0, 0.45, 0});
    p.set_joint_pose(3 + 3 * f, {0, 0.30, 0});
  }
  return p;
}

}  // namespace

FitResult fit_gt_grasp(const HandTemplate& tmpl, const TriMesh& obj, const MeshBvh& obj_bvh,
                       std::uint64_t seed, const FitOptions& opts) {
  obj.validate();
  if (!obj_bvh.watertight()) throw std::invalid_argument("fit_gt_grasp: object not watertight");

  Aabb bounds = obj.bounds();
  double obj_radius = 0.5 * norm(bounds.extent());
  std::vector<int> all_verts = [&] {
    std::vector<int> v(tmpl.vertex_count());
    for (int i = 0; i < tmpl.vertex_count(); ++i) v[i] = i;
    return v;
  }();

  FitResult best;
  for (int attempt = 0; attempt < opts.max_tries; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    HandParams init = initial_guess(obj, rng, obj_radius + 0.06);

    NamedTensors store;
    {
      Tensor32 t0 = Tensor32::zeros({1, kHandParamDim});
      for (int k = 0; k < kHandParamDim; ++k) t0.data[k] = static_cast<float>(init.v[k]);
      store.add("hand_params", std::move(t0));
    }
    nn::AdamState adam(store, {opts.lr, 0.9, 0.999, 1e-8});
    Tensor32 anchor = *store.find("hand_params");

    PointCloud obj_cloud = sample_surface(obj, 512, derive_seed(seed, 0x0b9ull + attempt));

    for (int step = 0; step < opts.steps; ++step) {
      nn::Tape<float> tape;
      nn::BoundParams<float> bound = nn::bind_params(tape, store, true);
      int params_id = bound("hand_params");
      int verts = lbs_node(tape, tmpl, params_id);

      // contact pull over the 5% of object points nearest the current hand
      std::vector<Vec3> hand_now = detail::rows_to_vec3(tape.value(verts));
      std::vector<int> cand = contact_candidates(obj_cloud, hand_now, false);
      std::vector<Vec3> cand_pts;
      cand_pts.reserve(cand.size());
      for (int c : cand) cand_pts.push_back(obj_cloud.points[c]);

      int cmap = cmap_loss_node(tape, verts, std::move(cand_pts));
      int penetr = penetr_loss_node(tape, verts, obj_bvh);
      int total = tape.add(tape.scale(cmap, 1000.0f), tape.scale(penetr, 10.0f));

      // wrist-distance prior: keep the wrist near its standoff start, letting
      // contact terms pull the final approach
      int trans = tape.slice_cols(params_id, 0, 3);
      int anchor_id = tape.constant(Tensor32::from(
          {1, 3}, {anchor.data[0], anchor.data[1], anchor.data[2]}));
      total = tape.add(total, tape.scale(tape.mse(trans, anchor_id), 20.0f));
      // mild pose/shape regularization toward the curled start
      int pose = tape.slice_cols(params_id, 3, 51);
      int pose0 = tape.constant(Tensor32::from(
          {1, 48}, std::vector<float>(anchor.data.begin() + 3, anchor.data.begin() + 51)));
      total = tape.add(total, tape.scale(tape.mse(pose, pose0), 2.0f));
      int shape = tape.slice_cols(params_id, 51, 61);
      int shape0 = tape.constant(Tensor32::zeros({1, kHandShapeDim}));
      total = tape.add(total, tape.scale(tape.mse(shape, shape0), 1.0f));

      tape.backward(total);
      adam.step(store, nn::collect_grads(tape, store, bound));
    }

    const Tensor32& final_t = *store.find("hand_params");
    std::vector<double> raw(final_t.data.begin(), final_t.data.end());
    for (int k = 51; k < kHandParamDim; ++k)
      raw[k] = std::clamp(raw[k], -kShapeCoeffLimit, kShapeCoeffLimit);
    HandParams fitted = HandParams::from_vector(raw);
    HandMesh mesh = lbs_forward(tmpl, fitted);

    FitResult r;
    r.params = fitted;
    r.tries_used = attempt + 1;
    r.in_contact = grasp_in_contact(mesh.vertices, obj_bvh);
    r.penetration_cm3 = penetration_volume(MeshBvh(mesh.to_mesh()), obj_bvh);
    r.accepted = r.in_contact && r.penetration_cm3 < opts.accept_penetration_cm3;
    if (attempt == 0 || (r.in_contact && !best.in_contact) ||
        (r.in_contact == best.in_contact && r.penetration_cm3 < best.penetration_cm3))
      best = r;
    if (r.accepted) return r;
  }
  best.accepted = false;
  return best;
}

// ---------------------------------------------------------------------------
// Dataset IO
// ---------------------------------------------------------------------------

json make_dataset(const MakeDatasetOptions& opts, const fs::path& out_dir) {
  if (opts.object_count < 1) throw std::invalid_argument("make_dataset: need >= 1 object");
  if (opts.grasps_per_object < 1) throw std::invalid_argument("make_dataset: need >= 1 grasp");
  fs::create_directories(out_dir / "objects");
  fs::create_directories(out_dir / "grasps");

  HandTemplate tmpl = build_procedural_template(derive_seed(opts.seed, 0x7e3ull));
  save_template(tmpl, out_dir / "template.json", out_dir / "template.blob");

  std::vector<TriMesh> objects = make_objects(opts.object_count, derive_seed(opts.seed, 0x0bcull));

  json records = json::array();
  json ungraspable = json::array();
  int accepted_total = 0;
  for (int oi = 0; oi < opts.object_count; ++oi) {
    char obj_name[64];
    std::snprintf(obj_name, sizeof(obj_name), "objects/obj_%03d.obj", oi);
    write_obj(objects[oi], out_dir / obj_name);
    MeshBvh bvh(objects[oi]);

    int accepted_here = 0;
    for (int g = 0; g < opts.grasps_per_object; ++g) {
      FitResult fit = fit_gt_grasp(tmpl, objects[oi], bvh,
                                   derive_seed(opts.seed, 1000ull * oi + 7ull * g + 1ull),
                                   opts.fit);
      if (!fit.accepted) continue;
      char grasp_name[64];
      std::snprintf(grasp_name, sizeof(grasp_name), "grasps/obj_%03d_g%02d.blob", oi, g);
      NamedTensors t;
      Tensor32 pv = Tensor32::zeros({kHandParamDim});
      for (int k = 0; k < kHandParamDim; ++k) pv.data[k] = static_cast<float>(fit.params.v[k]);
      t.add("hand_params", std::move(pv));
      write_blob(t, out_dir / grasp_name);

      bool is_test = opts.grasps_per_object >= 2 && g == opts.grasps_per_object - 1;
      records.push_back({{"object", obj_name},
                         {"grasp", grasp_name},
                         {"object_index", oi},
                         {"split", is_test ? "test" : "train"},
                         {"penetration_cm3", fit.penetration_cm3},
                         {"fit_tries", fit.tries_used}});
      ++accepted_here;
      ++accepted_total;
    }
    if (accepted_here == 0) ungraspable.push_back(oi);
  }

  json manifest;
  manifest["format_version"] = 1;
  manifest["seed"] = opts.seed;
  manifest["object_count"] = opts.object_count;
  manifest["grasps_per_object"] = opts.grasps_per_object;
  manifest["template"] = {{"json", "template.json"}, {"blob", "template.blob"}};
  manifest["records"] = records;
  manifest["ungraspable_objects"] = ungraspable;
  {
    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw std::runtime_error((out_dir / "manifest.json").string() + ": cannot write");
    out << manifest.dump(2) << "\n";
  }

  json summary;
  summary["accepted_grasps"] = accepted_total;
  summary["graspable_objects"] = opts.object_count - static_cast<int>(ungraspable.size());
  summary["ungraspable_objects"] = ungraspable;
  return summary;
}

Dataset load_dataset(const fs::path& manifest_path, bool verify_grasps) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error(manifest_path.string() + ": cannot open dataset manifest");
  json manifest;
  in >> manifest;

  Dataset ds;
  ds.root = manifest_path.parent_path();
  ds.manifest = manifest;
  ds.tmpl = load_external_template(ds.root / manifest.at("template").at("json").get<std::string>());
  ds.template_hash = fnv1a_file(ds.root / manifest.at("template").at("blob").get<std::string>());

  for (const auto& r : manifest.at("records")) {
    DatasetRecord rec;
    rec.object_path = ds.root / r.at("object").get<std::string>();
    rec.grasp_path = ds.root / r.at("grasp").get<std::string>();
    rec.object_index = r.at("object_index").get<int>();
    rec.split = r.at("split").get<std::string>();
    if (!fs::exists(rec.object_path))
      throw std::runtime_error("dataset: missing object file " + rec.object_path.string());
    if (!fs::exists(rec.grasp_path))
      throw std::runtime_error("dataset: missing grasp file " + rec.grasp_path.string());
    rec.object = read_mesh(rec.object_path);
    rec.object.validate();
    NamedTensors grasp = read_blob(rec.grasp_path);
    const Tensor32& pv = grasp.get("hand_params");
    if (pv.numel() != kHandParamDim)
      throw std::runtime_error("dataset: grasp " + rec.grasp_path.string() +
                               " has dimension " + std::to_string(pv.numel()) + ", expected 61");
    rec.gt_params = HandParams::from_vector(std::vector<double>(pv.data.begin(), pv.data.end()));
    rec.object_bvh = std::make_shared<MeshBvh>(rec.object);
    if (!rec.object_bvh->watertight())
      throw std::runtime_error("dataset: object not watertight: " + rec.object_path.string());
    if (verify_grasps) {
      HandMesh mesh = lbs_forward(ds.tmpl, rec.gt_params);
      if (!grasp_in_contact(mesh.vertices, *rec.object_bvh))
        throw std::runtime_error("dataset: stored grasp lost contact: " + rec.grasp_path.string());
      double pen = penetration_volume(MeshBvh(mesh.to_mesh()), *rec.object_bvh);
      if (pen >= 2.0)
        throw std::runtime_error("dataset: stored grasp penetration " + std::to_string(pen) +
                                 " cm^3 exceeds the acceptance bound: " + rec.grasp_path.string());
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace gf
