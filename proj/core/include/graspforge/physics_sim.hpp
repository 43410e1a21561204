#pragma once

#include <cstdint>
#include <vector>

#include "graspforge/geometry.hpp"

namespace gf {

// Rigid-body drop test: the object falls under gravity against static
// colliders (the grasping hand) with penalty-spring contacts.
struct SimParams {
  double gravity = 9.81;         // m/s^2, along -z
  double contact_stiffness = 1e4;  // N/m
  double contact_damping = 5.0;    // N*s/m
  double friction = 0.8;           // Coulomb cap on the tangential force
  double dt = 0.004;               // s
  int steps = 250;                 // 1 s total
  int contact_samples = 256;       // surface points used as contact probes
  double density = 800.0;          // kg/m^3
  std::uint64_t seed = 17;         // contact-sample seed
};

/// Displacement of the object's center of mass after the simulated second,
/// in cm. Colliders may be empty (free fall). The object must be watertight.
double simulate_displacement_cm(const TriMesh& object, const std::vector<const MeshBvh*>& colliders,
                                const SimParams& params = {});

}  // namespace gf
