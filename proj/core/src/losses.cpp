#include "graspforge/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gf {

void LossWeights::validate() const {
  for (double w : {l1, l2, l3, l4, l5})
    if (!(w >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
}

nlohmann::json LossWeights::to_json() const {
  return {{"lambda1", l1}, {"lambda2", l2}, {"lambda3", l3}, {"lambda4", l4}, {"lambda5", l5}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  LossWeights w;
  w.l1 = j.value("lambda1", 0.0);
  w.l2 = j.value("lambda2", 0.0);
  w.l3 = j.value("lambda3", 0.0);
  w.l4 = j.value("lambda4", 0.0);
  w.l5 = j.value("lambda5", 0.0);
  w.validate();
  return w;
}

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

std::vector<double> contact_map(const std::vector<Vec3>& hand_vertices, const PointCloud& obj) {
  obj.validate();
  PointGrid grid(hand_vertices);
  std::vector<double> c(obj.size());
  for (std::size_t i = 0; i < obj.size(); ++i) {
    double d = std::sqrt(grid.nearest(obj.points[i]).second);
    c[i] = 1.0 - sigmoid((d - kContactTau) / kContactSharpness);
  }
  return c;
}

std::vector<int> contact_candidates(const PointCloud& obj, const std::vector<Vec3>& hand_vertices,
                                    bool is_ground_truth) {
  obj.validate();
  PointGrid grid(hand_vertices);
  std::vector<double> dist(obj.size());
  for (std::size_t i = 0; i < obj.size(); ++i)
    dist[i] = std::sqrt(grid.nearest(obj.points[i]).second);

  std::vector<int> cand;
  if (is_ground_truth) {
    for (std::size_t i = 0; i < obj.size(); ++i)
      if (dist[i] <= kContactTau) cand.push_back(static_cast<int>(i));  // C_i >= 1/2
    if (!cand.empty()) return cand;
  }
  // 5% nearest, ties broken by index
  int k = std::max<int>(1, static_cast<int>(obj.size() / 20));
  std::vector<int> order(obj.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
  });
  cand.assign(order.begin(), order.begin() + k);
  std::sort(cand.begin(), cand.end());
  return cand;
}

double loss_param(const std::vector<double>& pred, const std::vector<double>& gt) {
  if (pred.size() != gt.size() || pred.empty())
    throw std::invalid_argument("parameter vectors must have equal nonzero length");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - gt[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double loss_mesh(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  PointCloud a{pred}, b{gt};
  return chamfer(a, b);
}

double loss_cmap(const std::vector<Vec3>& hand_vertices, const PointCloud& obj,
                 const std::vector<int>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("loss_cmap: empty candidate set");
  PointGrid grid(hand_vertices);
  double acc = 0.0;
  for (int i : candidates) {
    double d = std::sqrt(grid.nearest(obj.points[i]).second);
    acc += std::min(d, kCmapClip);
  }
  return acc / static_cast<double>(candidates.size());
}

double loss_penetr(const std::vector<Vec3>& hand_vertices, const MeshBvh& obj) {
  double acc = 0.0;
  for (const Vec3& v : hand_vertices) {
    double sd = obj.signed_distance(v);
    if (sd < 0.0) acc += -sd;
  }
  return acc;
}

double loss_consist(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                    const PointCloud& obj) {
  std::vector<double> cp = contact_map(pred, obj);
  std::vector<double> cg = contact_map(gt, obj);
  double acc = 0.0;
  for (std::size_t i = 0; i < cp.size(); ++i) {
    double d = cp[i] - cg[i];
    acc += d * d;
  }
  return acc / static_cast<double>(cp.size());
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"param", param}, {"mesh", mesh},       {"cmap", cmap},
          {"penetr", penetr}, {"consist", consist}, {"total", total}};
}

LossBreakdown total_loss(const std::vector<double>& pred_params,
                         const std::vector<double>& gt_params, const std::vector<Vec3>& pred_mesh,
                         const std::vector<Vec3>& gt_mesh, const MeshBvh& obj,
                         const PointCloud& obj_points, const LossWeights& weights) {
  weights.validate();
  LossBreakdown b;
  b.param = loss_param(pred_params, gt_params);
  b.mesh = loss_mesh(pred_mesh, gt_mesh);
  std::vector<int> cand = contact_candidates(obj_points, gt_mesh, true);
  b.cmap = loss_cmap(pred_mesh, obj_points, cand);
  b.penetr = loss_penetr(pred_mesh, obj);
  b.consist = loss_consist(pred_mesh, gt_mesh, obj_points);
  b.total = weights.l1 * b.param + weights.l2 * b.mesh + weights.l3 * b.cmap +
            weights.l4 * b.penetr + weights.l5 * b.consist;
  return b;
}

}  // namespace gf
