#include "graspforge/physics_sim.hpp"

#include <cmath>
#include <stdexcept>

#include "graspforge/rng.hpp"

namespace gf {

namespace {

struct Inertia {
  double mass = 0.0;
  Vec3 com{};
  Mat3 body{};  // about the COM, body frame
};

// Solid mass properties from a coarse voxelization (4mm cells).
Inertia mass_properties(const MeshBvh& bvh, double density) {
  const double res = 0.004;
  VoxelGrid g = voxelize_solid(bvh, res);
  double cell_mass = density * res * res * res;
  Inertia out;
  Vec3 sum{};
  for (int iz = 0; iz < g.nz; ++iz)
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = 0; ix < g.nx; ++ix)
        if (g.occupied(ix, iy, iz)) {
          out.mass += cell_mass;
          sum += g.center(ix, iy, iz) * cell_mass;
        }
  if (out.mass <= 0.0) throw std::invalid_argument("simulate: object has no interior volume");
  out.com = sum / out.mass;

  Mat3 inertia = Mat3::zero();
  for (int iz = 0; iz < g.nz; ++iz)
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = 0; ix < g.nx; ++ix) {
        if (!g.occupied(ix, iy, iz)) continue;
        Vec3 r = g.center(ix, iy, iz) - out.com;
        double r2 = norm2(r);
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            inertia(a, b) += cell_mass * ((a == b ? r2 : 0.0) - r[a] * r[b]);
      }
  out.body = inertia;
  return out;
}

Mat3 inverse3(const Mat3& m) {
  double det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
               m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
               m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
  if (std::abs(det) < 1e-18) throw std::runtime_error("simulate: singular inertia tensor");
  Mat3 inv;
  inv(0, 0) = (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) / det;
  inv(0, 1) = (m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2)) / det;
  inv(0, 2) = (m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1)) / det;
  inv(1, 0) = (m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2)) / det;
  inv(1, 1) = (m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)) / det;
  inv(1, 2) = (m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2)) / det;
  inv(2, 0) = (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)) / det;
  inv(2, 1) = (m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1)) / det;
  inv(2, 2) = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) / det;
  return inv;
}

struct Quat {
  double w = 1, x = 0, y = 0, z = 0;

  Mat3 matrix() const {
    Mat3 r;
    r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
           2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
           2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
    return r;
  }
  void integrate(const Vec3& omega, double dt) {
    // q += dt/2 * (omega quat) * q, then renormalize
    double hw = -0.5 * (omega.x * x + omega.y * y + omega.z * z);
    double hx = 0.5 * (omega.x * w + omega.y * z - omega.z * y);
    double hy = 0.5 * (omega.y * w + omega.z * x - omega.x * z);
    double hz = 0.5 * (omega.z * w + omega.x * y - omega.y * x);
    w += dt * hw;
    x += dt * hx;
    y += dt * hy;
    z += dt * hz;
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    w /= n;
    x /= n;
    y /= n;
    z /= n;
  }
};

}  // namespace

double simulate_displacement_cm(const TriMesh& object, const std::vector<const MeshBvh*>& colliders,
                                const SimParams& p) {
  object.validate();
  MeshBvh obj_bvh(object);
  if (!obj_bvh.watertight())
    throw std::invalid_argument("simulate: object must be watertight");

  Inertia inertia = mass_properties(obj_bvh, p.density);
  Mat3 inv_body = inverse3(inertia.body);

  // contact probes in body coordinates about the COM
  PointCloud probes = sample_surface(object, p.contact_samples, p.seed);
  std::vector<Vec3> local(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i) local[i] = probes.points[i] - inertia.com;

  Vec3 x = inertia.com;  // world COM
  Vec3 v{};
  Quat q;
  Vec3 omega{};
  const Vec3 gravity{0, 0, -p.gravity};

  for (int step = 0; step < p.steps; ++step) {
    Vec3 force = gravity * inertia.mass;
    Vec3 torque{};
    Mat3 r = q.matrix();
    if (!colliders.empty()) {
      for (const Vec3& lp : local) {
        Vec3 wp = x + r * lp;
        // deepest contact across colliders
        double depth = 0.0;
        Vec3 nrm{};
        bool hit = false;
        for (const MeshBvh* c : colliders) {
          double sd = c->signed_distance(wp);
          if (sd < 0.0 && -sd > depth) {
            Vec3 cp = c->closest_point(wp).point;
            double d = norm(wp - cp);
            if (d <= 0.0) continue;
            depth = -sd;
            nrm = (wp - cp) / d;  // pushes the probe out of the collider
            hit = true;
          }
        }
        if (!hit) continue;
        Vec3 arm = r * lp;
        Vec3 pv = v + cross(omega, arm);  // probe velocity
        double vn = dot(pv, nrm);
        double fn = p.contact_stiffness * depth - p.contact_damping * vn;
        if (fn < 0.0) fn = 0.0;
        Vec3 f = nrm * fn;
        Vec3 vt = pv - nrm * vn;
        double vt_norm = norm(vt);
        if (vt_norm > 1e-9) {
          double ft = std::min(p.contact_damping * vt_norm, p.friction * fn);
          f -= vt * (ft / vt_norm);
        }
        force += f;
        torque += cross(arm, f);
      }
    }

    // semi-implicit Euler
    v += force * (p.dt / inertia.mass);
    x += v * p.dt;
    Mat3 inv_world = r * inv_body * r.transposed();
    omega += inv_world * torque * p.dt;
    q.integrate(omega, p.dt);
  }

  return norm(x - inertia.com) * 100.0;
}

}  // namespace gf
