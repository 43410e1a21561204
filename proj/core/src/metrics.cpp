#include "graspforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "graspforge/rng.hpp"

namespace gf {

using nlohmann::json;

double penetration_volume(const MeshBvh& hand, const MeshBvh& obj) {
  return intersection_volume_cm3(hand, obj, kPenetrationVoxel);
}

double penetration_volume(const TriMesh& hand, const TriMesh& obj) {
  return penetration_volume(MeshBvh(hand), MeshBvh(obj));
}

bool grasp_in_contact(const std::vector<Vec3>& hand_vertices, const MeshBvh& obj) {
  for (const Vec3& v : hand_vertices)
    if (obj.unsigned_distance(v) < kContactThreshold) return true;
  return false;
}

double contact_ratio(const std::vector<bool>& in_contact) {
  if (in_contact.empty()) throw std::invalid_argument("contact_ratio: empty grasp set");
  int n = 0;
  for (bool b : in_contact) n += b;
  return 100.0 * n / static_cast<double>(in_contact.size());
}

double simulation_displacement(const TriMesh& hand, const TriMesh& obj, const SimParams& params) {
  MeshBvh hand_bvh(hand);
  if (!hand_bvh.watertight())
    throw std::invalid_argument("simulation_displacement: hand mesh must be watertight");
  return simulate_displacement_cm(obj, {&hand_bvh}, params);
}

// ---------------------------------------------------------------------------
// Diversity
// ---------------------------------------------------------------------------

DiversityResult diversity(const std::vector<std::vector<Vec3>>& keypoint_sets, int k,
                          std::uint64_t seed) {
  if (static_cast<int>(keypoint_sets.size()) < k)
    throw std::invalid_argument("diversity: need at least " + std::to_string(k) + " grasps");
  const int n = static_cast<int>(keypoint_sets.size());
  const int dim = static_cast<int>(keypoint_sets.front().size()) * 3;
  std::vector<std::vector<double>> x(n, std::vector<double>(dim));
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(keypoint_sets[i].size()) * 3 != dim)
      throw std::invalid_argument("diversity: inconsistent keypoint counts");
    for (std::size_t j = 0; j < keypoint_sets[i].size(); ++j) {
      x[i][3 * j] = keypoint_sets[i][j].x;
      x[i][3 * j + 1] = keypoint_sets[i][j].y;
      x[i][3 * j + 2] = keypoint_sets[i][j].z;
    }
  }
  auto dist2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (int j = 0; j < dim; ++j) {
      double t = a[j] - b[j];
      d += t * t;
    }
    return d;
  };

  // k-means++ seeding
  Rng rng(seed);
  std::vector<std::vector<double>> centers;
  centers.push_back(x[rng.uniform_index(n)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = 1e300;
      for (const auto& c : centers) best = std::min(best, dist2(x[i], c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // fewer distinct points than clusters; reuse an arbitrary point
      centers.push_back(x[rng.uniform_index(n)]);
      continue;
    }
    double u = rng.uniform() * total;
    int pick = 0;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += d2[i];
      if (u <= acc) {
        pick = i;
        break;
      }
    }
    centers.push_back(x[pick]);
  }

  // fixed-iteration Lloyd
  std::vector<int> assign(n, 0);
  for (int it = 0; it < 100; ++it) {
    for (int i = 0; i < n; ++i) {
      double best = 1e300;
      int bi = 0;
      for (int c = 0; c < k; ++c) {
        double d = dist2(x[i], centers[c]);
        if (d < best) {
          best = d;
          bi = c;
        }
      }
      assign[i] = bi;
    }
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (int j = 0; j < dim; ++j) sums[assign[i]][j] += x[i][j];
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (int j = 0; j < dim; ++j) centers[c][j] = sums[c][j] / counts[c];
  }

  DiversityResult out;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) ++counts[assign[i]];
  for (int c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    double p = static_cast<double>(counts[c]) / n;
    out.entropy_nats -= p * std::log(p);
  }
  int nonempty = 0;
  double spread = 0.0;
  for (int c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    double mean_d = 0.0;
    for (int i = 0; i < n; ++i)
      if (assign[i] == c) mean_d += std::sqrt(dist2(x[i], centers[c]));
    spread += mean_d / counts[c];
    ++nonempty;
  }
  out.cluster_size_cm = 100.0 * spread / std::max(1, nonempty);
  return out;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

json GraspReport::to_json() const {
  json per = json::array();
  for (const auto& g : per_grasp)
    per.push_back({{"penetration_cm3", g.penetration_cm3},
                   {"displacement_cm", g.displacement_cm},
                   {"in_contact", g.in_contact}});
  json j{{"schema_version", schema_version},
         {"per_grasp", per},
         {"aggregate",
          {{"mean_penetration_cm3", mean_penetration_cm3},
           {"mean_displacement_cm", mean_displacement_cm},
           {"contact_ratio_pct", contact_ratio_pct},
           {"entropy_nats", entropy_nats},
           {"cluster_size_cm", cluster_size_cm},
           {"grasp_count", static_cast<int>(per_grasp.size())}}},
         {"config", config}};
  if (mean_latency_s) j["aggregate"]["mean_latency_s"] = *mean_latency_s;
  return j;
}

std::string GraspReport::to_csv() const {
  std::ostringstream out;
  out << "index,penetration_cm3,displacement_cm,in_contact\n";
  for (std::size_t i = 0; i < per_grasp.size(); ++i)
    out << i << ',' << per_grasp[i].penetration_cm3 << ',' << per_grasp[i].displacement_cm << ','
        << (per_grasp[i].in_contact ? 1 : 0) << '\n';
  out << "aggregate," << mean_penetration_cm3 << ',' << mean_displacement_cm << ','
      << contact_ratio_pct << '\n';
  return out.str();
}

GraspReport evaluate_set(const GraspGenFn& generate, const std::vector<TriMesh>& objects,
                         int per_object, std::uint64_t diversity_seed, const SimParams& sim) {
  if (objects.empty()) throw std::invalid_argument("evaluate_set: empty object set");
  if (per_object < 1) throw std::invalid_argument("evaluate_set: per-object count must be >= 1");

  GraspReport report;
  std::vector<bool> contacts;
  std::vector<std::vector<Vec3>> all_keypoints;
  double pen_sum = 0.0, disp_sum = 0.0;
  for (std::size_t oi = 0; oi < objects.size(); ++oi) {
    MeshBvh obj_bvh(objects[oi]);
    std::vector<GraspForMetrics> grasps = generate(objects[oi], per_object, static_cast<int>(oi));
    for (const auto& g : grasps) {
      PerGraspMetrics m;
      MeshBvh hand_bvh(g.hand);
      m.penetration_cm3 = penetration_volume(hand_bvh, obj_bvh);
      m.in_contact = grasp_in_contact(g.hand.vertices, obj_bvh);
      m.displacement_cm = simulate_displacement_cm(objects[oi], {&hand_bvh}, sim);
      pen_sum += m.penetration_cm3;
      disp_sum += m.displacement_cm;
      contacts.push_back(m.in_contact);
      all_keypoints.push_back(g.keypoints);
      report.per_grasp.push_back(m);
    }
  }
  const double n = static_cast<double>(report.per_grasp.size());
  report.mean_penetration_cm3 = pen_sum / n;
  report.mean_displacement_cm = disp_sum / n;
  report.contact_ratio_pct = contact_ratio(contacts);
  if (static_cast<int>(all_keypoints.size()) >= kDiversityClusters) {
    DiversityResult d = diversity(all_keypoints, kDiversityClusters, diversity_seed);
    report.entropy_nats = d.entropy_nats;
    report.cluster_size_cm = d.cluster_size_cm;
  }
  return report;
}

}  // namespace gf
