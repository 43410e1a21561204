#include "graspforge/hand_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "graspforge/persistence.hpp"
#include "graspforge/primitives.hpp"
#include "graspforge/rng.hpp"

namespace gf {

using nlohmann::json;

// ---------------------------------------------------------------------------
// HandParams
// ---------------------------------------------------------------------------

HandParams HandParams::from_vector(const std::vector<double>& values) {
  if (static_cast<int>(values.size()) != kHandParamDim)
    throw std::invalid_argument("hand parameter vector must have length 61, got " +
                                std::to_string(values.size()));
  HandParams p;
  std::copy(values.begin(), values.end(), p.v.begin());
  for (int k = 0; k < kHandShapeDim; ++k) p.set_shape(k, p.shape(k));
  p.validate();
  return p;
}

void HandParams::set_shape(int k, double c) {
  v[51 + k] = std::clamp(c, -kShapeCoeffLimit, kShapeCoeffLimit);
}

void HandParams::validate() const {
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument("hand parameters contain non-finite value");
  for (int k = 0; k < kHandShapeDim; ++k)
    if (std::abs(shape(k)) > kShapeCoeffLimit + 1e-12)
      throw std::invalid_argument("shape coefficient out of range");
}

TriMesh HandMesh::to_mesh() const {
  if (!faces) throw std::logic_error("hand mesh has no face table");
  TriMesh m;
  m.vertices = vertices;
  m.faces = *faces;
  return m;
}

// ---------------------------------------------------------------------------
// Rotations
// ---------------------------------------------------------------------------

Mat3 rotation_axis_angle(const Vec3& aa) {
  double t2 = norm2(aa);
  double a, b;  // sin(t)/t, (1-cos t)/t^2
  if (t2 < 1e-8) {
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  } else {
    double t = std::sqrt(t2);
    a = std::sin(t) / t;
    b = (1.0 - std::cos(t)) / t2;
  }
  Mat3 k = skew(aa);
  return Mat3::identity() + k * a + (k * k) * b;
}

void rotation_axis_angle_jacobian(const Vec3& aa, Mat3& r, std::array<Mat3, 3>& dr) {
  double t2 = norm2(aa);
  double a, b, c1, c2;  // c1 = a'(t)/t, c2 = b'(t)/t
  if (t2 < 1e-8) {
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    c1 = -1.0 / 3.0 + t2 / 30.0;
    c2 = -1.0 / 12.0 + t2 / 180.0;
  } else {
    double t = std::sqrt(t2);
    double st = std::sin(t), ct = std::cos(t);
    a = st / t;
    b = (1.0 - ct) / t2;
    c1 = (t * ct - st) / (t2 * t);
    c2 = (t * st - 2.0 + 2.0 * ct) / (t2 * t2);
  }
  Mat3 k = skew(aa);
  Mat3 k2 = k * k;
  r = Mat3::identity() + k * a + k2 * b;
  const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int i = 0; i < 3; ++i) {
    Mat3 ei = skew(axes[i]);
    dr[i] = k * (c1 * aa[i]) + ei * a + k2 * (c2 * aa[i]) + (ei * k + k * ei) * b;
  }
}

// ---------------------------------------------------------------------------
// Skinning
// ---------------------------------------------------------------------------

namespace {

std::array<Affine, kHandJoints> global_transforms(const HandTemplate& tmpl,
                                                  const HandParams& params,
                                                  std::array<Mat3, kHandJoints>* local_rot = nullptr) {
  std::array<Affine, kHandJoints> g;
  for (int j = 0; j < kHandJoints; ++j) {
    Mat3 r = rotation_axis_angle(params.joint_pose(j));
    if (local_rot) (*local_rot)[j] = r;
    Vec3 off = tmpl.parent[j] < 0 ? tmpl.joint_rest[j]
                                  : tmpl.joint_rest[j] - tmpl.joint_rest[tmpl.parent[j]];
    Affine local{r, off};
    g[j] = tmpl.parent[j] < 0 ? local : g[tmpl.parent[j]] * local;
  }
  return g;
}

std::vector<Vec3> shaped_rest_vertices(const HandTemplate& tmpl, const HandParams& params) {
  std::vector<Vec3> out = tmpl.rest_vertices;
  for (int k = 0; k < kHandShapeDim; ++k) {
    double c = params.shape(k);
    if (c == 0.0) continue;
    for (int i = 0; i < tmpl.vertex_count(); ++i) out[i] += tmpl.shape_dir(k, i) * c;
  }
  return out;
}

}  // namespace

HandMesh lbs_forward(const HandTemplate& tmpl, const HandParams& params, LbsCache* cache) {
  params.validate();
  auto g = global_transforms(tmpl, params);
  std::array<Affine, kHandJoints> skin;
  for (int j = 0; j < kHandJoints; ++j)
    skin[j] = g[j] * Affine{Mat3::identity(), -tmpl.joint_rest[j]};

  std::vector<Vec3> shaped = shaped_rest_vertices(tmpl, params);
  Vec3 t = params.translation();

  HandMesh mesh;
  mesh.faces = &tmpl.faces;
  mesh.vertices.resize(tmpl.vertex_count());
  std::vector<Mat3> blend;
  std::vector<double> wsum;
  if (cache) {
    blend.resize(tmpl.vertex_count());
    wsum.resize(tmpl.vertex_count());
  }
  for (int i = 0; i < tmpl.vertex_count(); ++i) {
    // residual form: exact identity at rest pose even though fp32 weight
    // rows only sum to 1 within ~1e-7
    Vec3 acc = shaped[i];
    Mat3 rot_acc = Mat3::zero();
    double ws = 0.0;
    for (int j = 0; j < kHandJoints; ++j) {
      double w = tmpl.weight(i, j);
      if (w == 0.0) continue;
      acc += (skin[j].apply(shaped[i]) - shaped[i]) * w;
      ws += w;
      if (cache) rot_acc = rot_acc + skin[j].R * w;
    }
    mesh.vertices[i] = acc + t;
    if (cache) {
      blend[i] = rot_acc;
      wsum[i] = ws;
    }
  }

  if (cache) {
    cache->params = params;
    cache->global = g;
    cache->skin = skin;
    cache->shaped_rest = std::move(shaped);
    cache->blend_rot = std::move(blend);
    cache->weight_sum = std::move(wsum);
  }
  return mesh;
}

namespace {

// M_{m,c} = G_parent(m) . [dR_c | 0] . G_m^{-1}: applying it to A_j (for any
// joint j in m's subtree) gives dA_j/d(pose_m,c).
std::array<Affine, 3> pose_derivative_transforms(const HandTemplate& tmpl, const LbsCache& cache,
                                                 int m) {
  Mat3 r;
  std::array<Mat3, 3> dr;
  rotation_axis_angle_jacobian(cache.params.joint_pose(m), r, dr);
  Affine parent = tmpl.parent[m] < 0 ? Affine::identity() : cache.global[tmpl.parent[m]];
  Affine ginv = cache.global[m].rigid_inverse();
  std::array<Affine, 3> out;
  for (int c = 0; c < 3; ++c) {
    // parent . [dr | 0]: the derivative factor has no homogeneous one, so the
    // parent translation drops out of the composition.
    Affine pd{parent.R * dr[c], Vec3{}};
    out[c] = pd * ginv;
  }
  return out;
}

}  // namespace

std::array<double, kHandParamDim> lbs_backward(const HandTemplate& tmpl, const LbsCache& cache,
                                               const std::vector<Vec3>& dl_dverts) {
  const int nv = tmpl.vertex_count();
  if (static_cast<int>(dl_dverts.size()) != nv)
    throw std::invalid_argument("vertex gradient size mismatch");

  std::array<double, kHandParamDim> grad{};

  // translation
  Vec3 gt{};
  for (const Vec3& g : dl_dverts) gt += g;
  grad[0] = gt.x;
  grad[1] = gt.y;
  grad[2] = gt.z;

  // per-joint outer-product accumulators:
  //   T_j = sum_i w_ij g_i (A_j v_i)^T,  u_j = sum_i w_ij g_i
  std::array<Mat3, kHandJoints> tj;
  std::array<Vec3, kHandJoints> uj{};
  for (auto& m : tj) m = Mat3::zero();
  for (int i = 0; i < nv; ++i) {
    const Vec3& g = dl_dverts[i];
    for (int j = 0; j < kHandJoints; ++j) {
      double w = tmpl.weight(i, j);
      if (w == 0.0) continue;
      Vec3 a = cache.skin[j].apply(cache.shaped_rest[i]);
      Vec3 wg = g * w;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) tj[j](r, c) += wg[r] * a[c];
      uj[j] += wg;
    }
  }
  // roll up each joint's contribution into every ancestor (inclusive)
  std::array<Mat3, kHandJoints> qm = tj;
  std::array<Vec3, kHandJoints> wm = uj;
  for (int j = kHandJoints - 1; j >= 0; --j) {
    int p = tmpl.parent[j];
    if (p >= 0) {
      qm[p] = qm[p] + qm[j];
      wm[p] += wm[j];
    }
  }

  for (int m = 0; m < kHandJoints; ++m) {
    auto mc = pose_derivative_transforms(tmpl, cache, m);
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) s += mc[c].R(r, k) * qm[m](r, k);
      s += dot(mc[c].t, wm[m]);
      grad[3 + 3 * m + c] = s;
    }
  }

  // shape: dv_i/dc_k = (1 - W_i) S_ki + B_i S_ki from the residual form
  for (int k = 0; k < kHandShapeDim; ++k) {
    double s = 0.0;
    for (int i = 0; i < nv; ++i) {
      Vec3 dir = tmpl.shape_dir(k, i);
      Vec3 dv = cache.blend_rot[i] * dir + dir * (1.0 - cache.weight_sum[i]);
      s += dot(dl_dverts[i], dv);
    }
    grad[51 + k] = s;
  }
  return grad;
}

Tensor64 lbs_jacobian(const HandTemplate& tmpl, const HandParams& params) {
  LbsCache cache;
  lbs_forward(tmpl, params, &cache);
  const int nv = tmpl.vertex_count();
  Tensor64 jac = Tensor64::zeros({3 * nv, kHandParamDim});
  auto set = [&](int row, int col, double v) { jac.data[static_cast<std::size_t>(row) * kHandParamDim + col] = v; };

  std::array<std::array<Affine, 3>, kHandJoints> mc;
  for (int m = 0; m < kHandJoints; ++m) mc[m] = pose_derivative_transforms(tmpl, cache, m);

  // ancestor list (self first) per joint
  std::array<std::vector<int>, kHandJoints> ancestors;
  for (int j = 0; j < kHandJoints; ++j)
    for (int a = j; a >= 0; a = tmpl.parent[a]) ancestors[j].push_back(a);

  for (int i = 0; i < nv; ++i) {
    // translation block
    for (int c = 0; c < 3; ++c) set(3 * i + c, c, 1.0);

    // q_im = sum over joints j in subtree(m) of w_ij A_j(v~_i)
    std::array<Vec3, kHandJoints> q{};
    std::array<double, kHandJoints> wsum{};
    for (int j = 0; j < kHandJoints; ++j) {
      double w = tmpl.weight(i, j);
      if (w == 0.0) continue;
      Vec3 a = cache.skin[j].apply(cache.shaped_rest[i]) * w;
      for (int m : ancestors[j]) {
        q[m] += a;
        wsum[m] += w;
      }
    }
    for (int m = 0; m < kHandJoints; ++m) {
      if (wsum[m] == 0.0 && norm2(q[m]) == 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        Vec3 dv = mc[m][c].R * q[m] + mc[m][c].t * wsum[m];
        for (int r = 0; r < 3; ++r) set(3 * i + r, 3 + 3 * m + c, dv[r]);
      }
    }

    // shape block
    for (int k = 0; k < kHandShapeDim; ++k) {
      Vec3 dir = tmpl.shape_dir(k, i);
      Vec3 dv = cache.blend_rot[i] * dir + dir * (1.0 - cache.weight_sum[i]);
      for (int r = 0; r < 3; ++r) set(3 * i + r, 51 + k, dv[r]);
    }
  }
  return jac;
}

std::vector<Vec3> keypoints(const HandTemplate& tmpl, const std::vector<Vec3>& vertices) {
  if (static_cast<int>(vertices.size()) != tmpl.vertex_count())
    throw std::invalid_argument("vertex count does not match template");
  std::vector<Vec3> out(kHandKeypoints);
  const int nv = tmpl.vertex_count();
  for (int k = 0; k < kHandKeypoints; ++k) {
    Vec3 acc{};
    const double* row = &tmpl.keypoint_regressor[static_cast<std::size_t>(k) * nv];
    for (int i = 0; i < nv; ++i) acc += vertices[i] * row[i];
    out[k] = acc;
  }
  return out;
}

std::vector<Vec3> keypoints(const HandTemplate& tmpl, const HandMesh& mesh) {
  return keypoints(tmpl, mesh.vertices);
}

// ---------------------------------------------------------------------------
// Template validation
// ---------------------------------------------------------------------------

void HandTemplate::validate() const {
  const int nv = vertex_count();
  if (nv < 4) throw std::invalid_argument("hand template: too few vertices");
  if (static_cast<int>(skin_weights.size()) != nv * kHandJoints)
    throw std::invalid_argument("hand template: skin weight dimension mismatch");
  if (static_cast<int>(shape_basis.size()) != kHandShapeDim * nv)
    throw std::invalid_argument("hand template: shape basis dimension mismatch");
  if (static_cast<int>(keypoint_regressor.size()) != kHandKeypoints * nv)
    throw std::invalid_argument("hand template: keypoint regressor dimension mismatch");

  if (parent[0] != -1) throw std::invalid_argument("hand template: joint 0 must be the root");
  for (int j = 1; j < kHandJoints; ++j) {
    if (parent[j] < 0 || parent[j] >= kHandJoints)
      throw std::invalid_argument("hand template: parent index out of range");
    // walk up; a cycle would never reach the root within kHandJoints steps
    int a = j;
    int steps = 0;
    while (a != 0) {
      a = parent[a];
      if (a < 0 || ++steps > kHandJoints)
        throw std::invalid_argument("hand template: cyclic parent table");
    }
  }

  for (int i = 0; i < nv; ++i) {
    double s = 0.0;
    for (int j = 0; j < kHandJoints; ++j) {
      double w = weight(i, j);
      if (w < 0.0) throw std::invalid_argument("hand template: negative skin weight");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-6)
      throw std::invalid_argument("hand template: non-stochastic skin weight row");
  }
  for (int k = 0; k < kHandKeypoints; ++k) {
    double s = 0.0;
    for (int i = 0; i < nv; ++i) s += keypoint_regressor[static_cast<std::size_t>(k) * nv + i];
    if (std::abs(s - 1.0) > 1e-6)
      throw std::invalid_argument("hand template: non-stochastic keypoint regressor row");
  }

  TriMesh m;
  m.vertices = rest_vertices;
  m.faces = faces;
  m.validate();
}

// ---------------------------------------------------------------------------
// Procedural template
// ---------------------------------------------------------------------------

namespace {

double snap32(double v) { return static_cast<double>(static_cast<float>(v)); }

double point_segment_dist(const Vec3& p, const Vec3& a, const Vec3& b) {
  Vec3 ab = b - a;
  double t = norm2(ab) > 0.0 ? std::clamp(dot(p - a, ab) / norm2(ab), 0.0, 1.0) : 0.0;
  return norm(p - (a + ab * t));
}

/// Normalize a weight row, snap to fp32, then absorb the rounding residual
/// into the largest entry so the fp32 row still sums to 1 within ~1e-7.
void normalize_snap_row(double* row, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += row[i];
  if (s <= 0.0) throw std::logic_error("empty weight row");
  int largest = 0;
  for (int i = 0; i < n; ++i) {
    row[i] = snap32(row[i] / s);
    if (row[i] > row[largest]) largest = i;
  }
  double rest = 0.0;
  for (int i = 0; i < n; ++i)
    if (i != largest) rest += row[i];
  row[largest] = snap32(1.0 - rest);
}

Mat3 rotation_between(const Vec3& from, const Vec3& to) {
  Vec3 f = normalized(from), t = normalized(to);
  Vec3 axis = cross(f, t);
  double s = norm(axis), c = dot(f, t);
  if (s < 1e-12) {
    if (c > 0.0) return Mat3::identity();
    // opposite: rotate pi about any perpendicular axis
    Vec3 perp = std::abs(f.x) < 0.9 ? cross(f, Vec3{1, 0, 0}) : cross(f, Vec3{0, 1, 0});
    return rotation_axis_angle(normalized(perp) * 3.14159265358979323846);
  }
  double angle = std::atan2(s, c);
  return rotation_axis_angle(normalized(axis) * angle);
}

struct FingerSpec {
  Vec3 base;
  Vec3 dir;       // unit
  double length;  // mcp to tip
  double radius;
  int segments, rings;
};

}  // namespace

HandTemplate build_procedural_template(std::uint64_t seed) {
  Rng rng(seed);
  auto jitter = [&](double v) { return v * (1.0 + 0.06 * (2.0 * rng.uniform() - 1.0)); };

  const double cm = 0.01;
  HandTemplate t;

  // palm: scaled sphere, wrist edge at the origin, extends along +x
  double palm_len = jitter(4.2 * cm);   // half-length
  double palm_wid = jitter(3.6 * cm);   // half-width
  double palm_thk = jitter(1.3 * cm);   // half-thickness
  TriMesh palm = make_uv_sphere(1.0, 12, 9);  // 110 vertices
  {
    Mat3 s = Mat3::zero();
    s(0, 0) = palm_thk;  // sphere z axis -> x? keep axes: scale then no rotation
    s(1, 1) = palm_wid;
    s(2, 2) = palm_len;
    // sphere poles are on z; rotate z->x so the palm is long in x
    Mat3 rot = rotation_between({0, 0, 1}, {1, 0, 0});
    transform_mesh(palm, rot * s, Vec3{palm_len, 0, 0});
  }

  // fingers: index..pinky along +x, thumb angled off the palm edge; finger
  // bases sit inside the palm volume so the union reads as one hand
  std::vector<FingerSpec> fingers;
  double base_x = 1.6 * palm_len;
  double lens[4] = {5.6, 6.1, 5.7, 4.7};
  double rads[4] = {0.66, 0.70, 0.66, 0.60};
  double offs[4] = {2.62, 0.88, -0.88, -2.62};
  for (int f = 0; f < 4; ++f) {
    FingerSpec s;
    s.base = {base_x, jitter(offs[f] * cm), 0};
    s.dir = normalized(Vec3{1.0, 0.03 * offs[f], 0.0});
    s.length = jitter(lens[f] * cm);
    s.radius = jitter(rads[f] * cm);
    s.segments = 8;
    s.rings = 17;  // 8*17+2 = 138 vertices
    fingers.push_back(s);
  }
  {
    FingerSpec s;
    s.base = {jitter(0.8 * palm_len), jitter(-0.95 * palm_wid), jitter(0.2 * cm)};
    s.dir = normalized(Vec3{0.55, -0.75, 0.18});
    s.length = jitter(4.6 * cm);
    s.radius = jitter(0.80 * cm);
    s.segments = 6;
    s.rings = 19;  // 6*19+2 = 116 vertices
    fingers.push_back(s);
  }

  // joints: 0 = wrist at origin, then (mcp, pip, dip) per finger
  t.parent[0] = -1;
  t.joint_rest[0] = {0, 0, 0};
  std::array<Vec3, 5> tips;
  for (int f = 0; f < 5; ++f) {
    const FingerSpec& s = fingers[f];
    int mcp = 1 + 3 * f, pip = 2 + 3 * f, dip = 3 + 3 * f;
    t.joint_rest[mcp] = s.base;
    t.joint_rest[pip] = s.base + s.dir * (0.45 * s.length);
    t.joint_rest[dip] = s.base + s.dir * (0.75 * s.length);
    tips[f] = s.base + s.dir * s.length;
    t.parent[mcp] = 0;
    t.parent[pip] = mcp;
    t.parent[dip] = pip;
  }

  // assemble mesh, tracking which component each vertex belongs to
  TriMesh mesh = palm;
  std::vector<int> component(mesh.vertices.size(), -1);  // -1 palm, f finger
  for (int f = 0; f < 5; ++f) {
    const FingerSpec& s = fingers[f];
    double axis_len = std::max(1e-4, s.length - 2.0 * s.radius);
    TriMesh cap = make_capsule(s.radius, axis_len, s.segments, s.rings);
    // capsule is centered on z spanning [-L/2-r, L/2+r]; move base pole to
    // the mcp joint and point it along the finger direction
    translate_mesh(cap, {0, 0, axis_len / 2 + s.radius});
    transform_mesh(cap, rotation_between({0, 0, 1}, s.dir), s.base - s.dir * (0.6 * s.radius));
    append_mesh(mesh, cap);
    component.resize(mesh.vertices.size(), f);
  }
  if (static_cast<int>(mesh.vertices.size()) != kHandVertexCount)
    throw std::logic_error("procedural hand has wrong vertex count: " +
                           std::to_string(mesh.vertices.size()));

  t.rest_vertices = mesh.vertices;
  t.faces = mesh.faces;

  // skin weights: palm vertices follow the wrist (with a soft knuckle blend),
  // finger vertices follow their own chain only
  const int nv = kHandVertexCount;
  t.skin_weights.assign(static_cast<std::size_t>(nv) * kHandJoints, 0.0);
  const double sigma_f = 0.0095, sigma_palm = 0.012;
  for (int i = 0; i < nv; ++i) {
    double* row = &t.skin_weights[static_cast<std::size_t>(i) * kHandJoints];
    const Vec3& p = t.rest_vertices[i];
    if (component[i] < 0) {
      row[0] = 1.0;  // baseline wrist rigidity
      for (int f = 0; f < 5; ++f) {
        double d = norm(p - t.joint_rest[1 + 3 * f]);
        row[1 + 3 * f] = 0.5 * std::exp(-d * d / (2 * sigma_palm * sigma_palm));
      }
    } else {
      int f = component[i];
      int mcp = 1 + 3 * f, pip = 2 + 3 * f, dip = 3 + 3 * f;
      double dw = point_segment_dist(p, {0, 0, 0}, t.joint_rest[mcp]);
      double d1 = point_segment_dist(p, t.joint_rest[mcp], t.joint_rest[pip]);
      double d2 = point_segment_dist(p, t.joint_rest[pip], t.joint_rest[dip]);
      double d3 = point_segment_dist(p, t.joint_rest[dip], tips[f]);
      row[0] = 0.25 * std::exp(-dw * dw / (2 * sigma_f * sigma_f));
      row[mcp] = std::exp(-d1 * d1 / (2 * sigma_f * sigma_f));
      row[pip] = std::exp(-d2 * d2 / (2 * sigma_f * sigma_f));
      row[dip] = std::exp(-d3 * d3 / (2 * sigma_f * sigma_f));
    }
    normalize_snap_row(row, kHandJoints);
  }

  // keypoint regressor: gaussian falloff around joints and fingertips
  t.keypoint_regressor.assign(static_cast<std::size_t>(kHandKeypoints) * nv, 0.0);
  std::array<Vec3, kHandKeypoints> kp_loc;
  kp_loc[0] = {0, 0, 0};
  for (int f = 0; f < 5; ++f) {
    kp_loc[1 + 4 * f] = t.joint_rest[1 + 3 * f];
    kp_loc[2 + 4 * f] = t.joint_rest[2 + 3 * f];
    kp_loc[3 + 4 * f] = t.joint_rest[3 + 3 * f];
    kp_loc[4 + 4 * f] = tips[f];
  }
  const double sigma_kp = 0.006;
  for (int k = 0; k < kHandKeypoints; ++k) {
    double* row = &t.keypoint_regressor[static_cast<std::size_t>(k) * nv];
    for (int i = 0; i < nv; ++i) {
      double d = norm(t.rest_vertices[i] - kp_loc[k]);
      row[i] = std::exp(-d * d / (2 * sigma_kp * sigma_kp));
    }
    normalize_snap_row(row, nv);
  }

  // shape basis: smooth random fields, orthogonalized, max displacement
  // 2.5mm per unit coefficient
  t.shape_basis.assign(static_cast<std::size_t>(kHandShapeDim) * nv, Vec3{});
  Vec3 center = mesh.vertex_centroid();
  for (int k = 0; k < kHandShapeDim; ++k) {
    Mat3 lin;
    for (int e = 0; e < 9; ++e) lin.m[e] = rng.normal();
    Vec3 amp{rng.normal(), rng.normal(), rng.normal()};
    Vec3 freq{rng.uniform(20, 60), rng.uniform(20, 60), rng.uniform(20, 60)};
    double phase = rng.uniform(0, 6.28318530717958648);
    for (int i = 0; i < nv; ++i) {
      Vec3 d = t.rest_vertices[i] - center;
      double s = std::sin(dot(d, freq) + phase);
      t.shape_basis[static_cast<std::size_t>(k) * nv + i] = lin * d + amp * (0.02 * s);
    }
  }
  // Gram-Schmidt over flattened fields
  for (int k = 0; k < kHandShapeDim; ++k) {
    Vec3* fk = &t.shape_basis[static_cast<std::size_t>(k) * nv];
    for (int j = 0; j < k; ++j) {
      const Vec3* fj = &t.shape_basis[static_cast<std::size_t>(j) * nv];
      double num = 0.0, den = 0.0;
      for (int i = 0; i < nv; ++i) {
        num += dot(fk[i], fj[i]);
        den += dot(fj[i], fj[i]);
      }
      double c = num / den;
      for (int i = 0; i < nv; ++i) fk[i] -= fj[i] * c;
    }
    double maxd = 0.0;
    for (int i = 0; i < nv; ++i) maxd = std::max(maxd, norm(fk[i]));
    double scale = 0.0025 / std::max(maxd, 1e-12);
    for (int i = 0; i < nv; ++i) {
      fk[i] *= scale;
      fk[i] = {snap32(fk[i].x), snap32(fk[i].y), snap32(fk[i].z)};
    }
  }

  // snap geometry so construction == save/load round trip
  for (Vec3& v : t.rest_vertices) v = {snap32(v.x), snap32(v.y), snap32(v.z)};
  for (Vec3& v : t.joint_rest) v = {snap32(v.x), snap32(v.y), snap32(v.z)};

  t.validate();
  return t;
}

// ---------------------------------------------------------------------------
// Template persistence
// ---------------------------------------------------------------------------

void save_template(const HandTemplate& tmpl, const std::filesystem::path& json_path,
                   const std::filesystem::path& blob_path) {
  const int nv = tmpl.vertex_count();
  json manifest;
  manifest["format_version"] = 1;
  manifest["vertex_count"] = nv;
  manifest["joint_count"] = kHandJoints;
  manifest["shape_count"] = kHandShapeDim;
  manifest["keypoint_count"] = kHandKeypoints;
  manifest["parents"] = tmpl.parent;
  manifest["blob"] = blob_path.filename().string();
  json faces = json::array();
  for (const auto& f : tmpl.faces) faces.push_back({f[0], f[1], f[2]});
  manifest["faces"] = std::move(faces);

  NamedTensors tensors;
  auto vec3_tensor = [](const Vec3* data, int n) {
    Tensor32 t = Tensor32::zeros({n, 3});
    for (int i = 0; i < n; ++i) {
      t.data[3 * i + 0] = static_cast<float>(data[i].x);
      t.data[3 * i + 1] = static_cast<float>(data[i].y);
      t.data[3 * i + 2] = static_cast<float>(data[i].z);
    }
    return t;
  };
  tensors.add("rest_vertices", vec3_tensor(tmpl.rest_vertices.data(), nv));
  tensors.add("joint_rest", vec3_tensor(tmpl.joint_rest.data(), kHandJoints));
  {
    Tensor32 w = Tensor32::zeros({nv, kHandJoints});
    for (std::size_t i = 0; i < tmpl.skin_weights.size(); ++i)
      w.data[i] = static_cast<float>(tmpl.skin_weights[i]);
    tensors.add("skin_weights", std::move(w));
  }
  {
    Tensor32 s = Tensor32::zeros({kHandShapeDim, nv, 3});
    for (std::size_t i = 0; i < tmpl.shape_basis.size(); ++i) {
      s.data[3 * i + 0] = static_cast<float>(tmpl.shape_basis[i].x);
      s.data[3 * i + 1] = static_cast<float>(tmpl.shape_basis[i].y);
      s.data[3 * i + 2] = static_cast<float>(tmpl.shape_basis[i].z);
    }
    tensors.add("shape_basis", std::move(s));
  }
  {
    Tensor32 r = Tensor32::zeros({kHandKeypoints, nv});
    for (std::size_t i = 0; i < tmpl.keypoint_regressor.size(); ++i)
      r.data[i] = static_cast<float>(tmpl.keypoint_regressor[i]);
    tensors.add("keypoint_regressor", std::move(r));
  }

  std::ofstream out(json_path);
  if (!out) throw std::runtime_error(json_path.string() + ": cannot open for writing");
  out << manifest.dump(2) << "\n";
  write_blob(tensors, blob_path);
}

HandTemplate load_external_template(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error(json_path.string() + ": cannot open");
  json manifest;
  in >> manifest;

  const int nv = manifest.at("vertex_count").get<int>();
  if (manifest.at("joint_count").get<int>() != kHandJoints)
    throw std::runtime_error("template dimension mismatch: joint_count");
  if (manifest.at("shape_count").get<int>() != kHandShapeDim)
    throw std::runtime_error("template dimension mismatch: shape_count");
  if (manifest.at("keypoint_count").get<int>() != kHandKeypoints)
    throw std::runtime_error("template dimension mismatch: keypoint_count");

  HandTemplate t;
  auto parents = manifest.at("parents").get<std::vector<int>>();
  if (static_cast<int>(parents.size()) != kHandJoints)
    throw std::runtime_error("template dimension mismatch: parents");
  std::copy(parents.begin(), parents.end(), t.parent.begin());
  for (const auto& f : manifest.at("faces"))
    t.faces.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});

  std::filesystem::path blob_path =
      json_path.parent_path() / manifest.at("blob").get<std::string>();
  NamedTensors tensors = read_blob(blob_path);

  auto expect = [&](const std::string& name, std::vector<int> shape) -> const Tensor32& {
    const Tensor32& ten = tensors.get(name);
    if (ten.shape != shape)
      throw std::runtime_error("template dimension mismatch: tensor " + name + " has shape " +
                               shape_str(ten.shape) + ", expected " + shape_str(shape));
    return ten;
  };

  const Tensor32& rv = expect("rest_vertices", {nv, 3});
  t.rest_vertices.resize(nv);
  for (int i = 0; i < nv; ++i)
    t.rest_vertices[i] = {rv.data[3 * i], rv.data[3 * i + 1], rv.data[3 * i + 2]};

  const Tensor32& jr = expect("joint_rest", {kHandJoints, 3});
  for (int j = 0; j < kHandJoints; ++j)
    t.joint_rest[j] = {jr.data[3 * j], jr.data[3 * j + 1], jr.data[3 * j + 2]};

  const Tensor32& sw = expect("skin_weights", {nv, kHandJoints});
  t.skin_weights.assign(sw.data.begin(), sw.data.end());

  const Tensor32& sb = expect("shape_basis", {kHandShapeDim, nv, 3});
  t.shape_basis.resize(static_cast<std::size_t>(kHandShapeDim) * nv);
  for (std::size_t i = 0; i < t.shape_basis.size(); ++i)
    t.shape_basis[i] = {sb.data[3 * i], sb.data[3 * i + 1], sb.data[3 * i + 2]};

  const Tensor32& kr = expect("keypoint_regressor", {kHandKeypoints, nv});
  t.keypoint_regressor.assign(kr.data.begin(), kr.data.end());

  t.validate();
  return t;
}

}  // namespace gf
