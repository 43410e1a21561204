#pragma once

// Tape bindings for the grasp losses: custom nodes with analytically derived
// backward passes with respect to hand vertices (and, through the skinning
// node, the 61 hand parameters). Forward math runs in double regardless of
// the tape precision.

#include <cmath>
#include <memory>

#include "graspforge/geometry.hpp"
#include "graspforge/hand_model.hpp"
#include "graspforge/losses.hpp"
#include "graspforge/nn/tape.hpp"

namespace gf {

namespace detail {

template <class T>
std::vector<Vec3> rows_to_vec3(const Tensor<T>& t) {
  if (t.cols() != 3) throw std::invalid_argument("expected an N x 3 tensor");
  std::vector<Vec3> out(t.rows());
  for (int i = 0; i < t.rows(); ++i)
    out[i] = {static_cast<double>(t.at(i, 0)), static_cast<double>(t.at(i, 1)),
              static_cast<double>(t.at(i, 2))};
  return out;
}

}  // namespace detail

/// Skinning as a tape node: 61 parameters -> V x 3 vertices. The template
/// must outlive the tape.
template <class T>
int lbs_node(nn::Tape<T>& tape, const HandTemplate& tmpl, int params61) {
  const Tensor<T>& pv = tape.value(params61);
  if (pv.numel() != kHandParamDim) throw std::invalid_argument("lbs_node: expected 61 parameters");
  std::vector<double> raw(pv.data.begin(), pv.data.end());
  HandParams params = HandParams::from_vector(raw);

  auto cache = std::make_shared<LbsCache>();
  HandMesh mesh = lbs_forward(tmpl, params, cache.get());

  Tensor<T> value = Tensor<T>::zeros({tmpl.vertex_count(), 3});
  for (int i = 0; i < tmpl.vertex_count(); ++i)
    for (int c = 0; c < 3; ++c) value.at(i, c) = static_cast<T>(mesh.vertices[i][c]);

  const HandTemplate* tp = &tmpl;
  int id = static_cast<int>(tape.size());
  return tape.make_node(std::move(value), {params61}, [params61, cache, tp, id](nn::Tape<T>& t) {
    if (!t.needs_grad(params61)) return;
    const Tensor<T>& gy = t.grad(id);
    std::vector<Vec3> gv = detail::rows_to_vec3(gy);
    auto gp = lbs_backward(*tp, *cache, gv);
    Tensor<T>& gx = t.grad(params61);
    for (int k = 0; k < kHandParamDim; ++k) gx.data[k] += static_cast<T>(gp[k]);
  });
}

/// Chamfer distance between a variable vertex set and a fixed target cloud.
template <class T>
int chamfer_node(nn::Tape<T>& tape, int verts, std::vector<Vec3> target) {
  std::vector<Vec3> pred = detail::rows_to_vec3(tape.value(verts));
  if (pred.empty() || target.empty()) throw std::invalid_argument("chamfer: empty input");

  PointGrid pred_grid(pred), target_grid(target);
  auto nn_pt = std::make_shared<std::vector<int>>(pred.size());   // pred -> target
  auto nn_tp = std::make_shared<std::vector<int>>(target.size());  // target -> pred
  double sum_pt = 0.0, sum_tp = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto [j, d2] = target_grid.nearest(pred[i]);
    (*nn_pt)[i] = j;
    sum_pt += d2;
  }
  for (std::size_t j = 0; j < target.size(); ++j) {
    auto [i, d2] = pred_grid.nearest(target[j]);
    (*nn_tp)[j] = i;
    sum_tp += d2;
  }
  const double na = static_cast<double>(pred.size()), nb = static_cast<double>(target.size());
  double value = sum_pt / na + sum_tp / nb;

  auto tgt = std::make_shared<std::vector<Vec3>>(std::move(target));
  int id = static_cast<int>(tape.size());
  return tape.make_node(Tensor<T>::scalar(static_cast<T>(value)), {verts},
                        [verts, nn_pt, nn_tp, tgt, na, nb, id](nn::Tape<T>& t) {
    if (!t.needs_grad(verts)) return;
    double g = static_cast<double>(t.grad(id).data[0]);
    std::vector<Vec3> pred = detail::rows_to_vec3(t.value(verts));
    Tensor<T>& gx = t.grad(verts);
    auto add = [&](int row, const Vec3& v) {
      for (int c = 0; c < 3; ++c) gx.at(row, c) += static_cast<T>(v[c]);
    };
    for (std::size_t i = 0; i < pred.size(); ++i)
      add(static_cast<int>(i), (pred[i] - (*tgt)[(*nn_pt)[i]]) * (2.0 * g / na));
    for (std::size_t j = 0; j < tgt->size(); ++j) {
      int i = (*nn_tp)[j];
      add(i, (pred[i] - (*tgt)[j]) * (2.0 * g / nb));
    }
  });
}

/// Mean clipped distance from candidate object points to the nearest hand
/// vertex (the contact-pull term).
template <class T>
int cmap_loss_node(nn::Tape<T>& tape, int verts, std::vector<Vec3> candidate_points) {
  if (candidate_points.empty()) throw std::invalid_argument("cmap loss: empty candidate set");
  std::vector<Vec3> pred = detail::rows_to_vec3(tape.value(verts));
  PointGrid grid(pred);

  struct Entry {
    int vertex;
    Vec3 dir;  // d(distance)/d(vertex), zero when clipped or coincident
  };
  auto entries = std::make_shared<std::vector<Entry>>();
  const double inv_n = 1.0 / static_cast<double>(candidate_points.size());
  double acc = 0.0;
  for (const Vec3& o : candidate_points) {
    auto [i, d2] = grid.nearest(o);
    double d = std::sqrt(d2);
    acc += std::min(d, kCmapClip);
    if (d > 0.0 && d < kCmapClip)
      entries->push_back({i, (pred[i] - o) / d});
  }

  int id = static_cast<int>(tape.size());
  return tape.make_node(Tensor<T>::scalar(static_cast<T>(acc * inv_n)), {verts},
                        [verts, entries, inv_n, id](nn::Tape<T>& t) {
    if (!t.needs_grad(verts)) return;
    double g = static_cast<double>(t.grad(id).data[0]) * inv_n;
    Tensor<T>& gx = t.grad(verts);
    for (const Entry& e : *entries)
      for (int c = 0; c < 3; ++c) gx.at(e.vertex, c) += static_cast<T>(g * e.dir[c]);
  });
}

/// Sum of penetration depths of hand vertices strictly inside the object.
/// `frame_offset` maps tape-frame vertices into the BVH frame (v + offset).
template <class T>
int penetr_loss_node(nn::Tape<T>& tape, int verts, const MeshBvh& obj,
                     const Vec3& frame_offset = {}) {
  std::vector<Vec3> pred = detail::rows_to_vec3(tape.value(verts));

  struct Entry {
    int vertex;
    Vec3 dir;  // d|sd|/d(vertex) for an interior vertex
  };
  auto entries = std::make_shared<std::vector<Entry>>();
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    Vec3 q = pred[i] + frame_offset;
    double sd = obj.signed_distance(q);
    if (sd < 0.0) {
      acc += -sd;
      Vec3 nn = obj.closest_point(q).point;
      double d = norm(q - nn);
      if (d > 0.0) entries->push_back({static_cast<int>(i), (q - nn) / d});
    }
  }

  int id = static_cast<int>(tape.size());
  return tape.make_node(Tensor<T>::scalar(static_cast<T>(acc)), {verts},
                        [verts, entries, id](nn::Tape<T>& t) {
    if (!t.needs_grad(verts)) return;
    double g = static_cast<double>(t.grad(id).data[0]);
    Tensor<T>& gx = t.grad(verts);
    for (const Entry& e : *entries)
      for (int c = 0; c < 3; ++c) gx.at(e.vertex, c) += static_cast<T>(g * e.dir[c]);
  });
}

/// Mean squared difference between the predicted contact map and a fixed
/// ground-truth map over the same object points.
template <class T>
int consist_loss_node(nn::Tape<T>& tape, int verts, std::vector<Vec3> obj_points,
                      std::vector<double> gt_map) {
  if (obj_points.size() != gt_map.size())
    throw std::invalid_argument("consist loss: map/point size mismatch");
  std::vector<Vec3> pred = detail::rows_to_vec3(tape.value(verts));
  PointGrid grid(pred);

  struct Entry {
    int vertex;
    Vec3 dl_dv;  // full chain d(term_i)/d(vertex), without the upstream grad
  };
  auto entries = std::make_shared<std::vector<Entry>>();
  const double inv_n = 1.0 / static_cast<double>(obj_points.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < obj_points.size(); ++i) {
    auto [vi, d2] = grid.nearest(obj_points[i]);
    double d = std::sqrt(d2);
    double x = (d - kContactTau) / kContactSharpness;
    double s = 1.0 / (1.0 + std::exp(-x));
    double c = 1.0 - s;
    double diff = c - gt_map[i];
    acc += diff * diff;
    if (d > 0.0) {
      double dc_dd = -s * (1.0 - s) / kContactSharpness;
      double factor = 2.0 * diff * dc_dd * inv_n;
      entries->push_back({vi, (pred[vi] - obj_points[i]) * (factor / d)});
    }
  }

  int id = static_cast<int>(tape.size());
  return tape.make_node(Tensor<T>::scalar(static_cast<T>(acc * inv_n)), {verts},
                        [verts, entries, id](nn::Tape<T>& t) {
    if (!t.needs_grad(verts)) return;
    double g = static_cast<double>(t.grad(id).data[0]);
    Tensor<T>& gx = t.grad(verts);
    for (const Entry& e : *entries)
      for (int c = 0; c < 3; ++c) gx.at(e.vertex, c) += static_cast<T>(g * e.dl_dv[c]);
  });
}

// ---------------------------------------------------------------------------
// Composite: the full training objective for one hand-object sample.
// ---------------------------------------------------------------------------

template <class T>
struct GraspLossIds {
  int param = -1, mesh = -1, cmap = -1, penetr = -1, consist = -1;
  int total = -1;

  LossBreakdown values(const nn::Tape<T>& tape) const {
    LossBreakdown b;
    auto get = [&](int id) { return id < 0 ? 0.0 : static_cast<double>(tape.value(id).data[0]); };
    b.param = get(param);
    b.mesh = get(mesh);
    b.cmap = get(cmap);
    b.penetr = get(penetr);
    b.consist = get(consist);
    b.total = get(total);
    return b;
  }
};

struct GraspLossSample {
  std::vector<double> gt_params;      // 61, centered frame
  std::vector<Vec3> gt_verts_subset;  // subsampled GT mesh vertices
  std::vector<double> gt_contact;     // GT contact map over obj_points
  std::vector<int> candidates;        // contact candidates over obj_points
  const PointCloud* obj_points = nullptr;
  const MeshBvh* obj_bvh = nullptr;
  Vec3 bvh_frame_offset{};  // centered frame -> BVH frame
};

/// Builds the weighted sample loss; zero-weight terms are skipped entirely.
template <class T>
GraspLossIds<T> grasp_loss_nodes(nn::Tape<T>& tape, int pred_params, int pred_verts_full,
                                 const std::vector<int>& vertex_subset,
                                 const GraspLossSample& sample, const LossWeights& w) {
  GraspLossIds<T> ids;
  int sub = tape.gather_rows(pred_verts_full, vertex_subset);
  int total = tape.constant(Tensor<T>::scalar(T(0)));

  if (w.l1 > 0.0) {
    Tensor<T> gt = Tensor<T>::zeros({kHandParamDim});
    for (int k = 0; k < kHandParamDim; ++k) gt.data[k] = static_cast<T>(sample.gt_params[k]);
    ids.param = tape.mse(pred_params, tape.constant(std::move(gt)));
    total = tape.add(total, tape.scale(ids.param, static_cast<T>(w.l1)));
  }
  if (w.l2 > 0.0) {
    ids.mesh = chamfer_node(tape, sub, sample.gt_verts_subset);
    total = tape.add(total, tape.scale(ids.mesh, static_cast<T>(w.l2)));
  }
  if (w.l3 > 0.0) {
    std::vector<Vec3> cand_pts;
    cand_pts.reserve(sample.candidates.size());
    for (int i : sample.candidates) cand_pts.push_back(sample.obj_points->points[i]);
    ids.cmap = cmap_loss_node(tape, sub, std::move(cand_pts));
    total = tape.add(total, tape.scale(ids.cmap, static_cast<T>(w.l3)));
  }
  if (w.l4 > 0.0) {
    ids.penetr = penetr_loss_node(tape, sub, *sample.obj_bvh, sample.bvh_frame_offset);
    total = tape.add(total, tape.scale(ids.penetr, static_cast<T>(w.l4)));
  }
  if (w.l5 > 0.0) {
    ids.consist = consist_loss_node(tape, sub, sample.obj_points->points, sample.gt_contact);
    total = tape.add(total, tape.scale(ids.consist, static_cast<T>(w.l5)));
  }
  ids.total = total;
  return ids;
}

}  // namespace gf
