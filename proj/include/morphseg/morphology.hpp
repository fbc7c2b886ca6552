// The nine-element structuring set (the planes of a 3x3x3 cube through its
// center) and the SI / IS / curvature operators on real-valued 3D grids.
#pragma once

#include <array>
#include <vector>

#include "morphseg/volume.hpp"

namespace morphseg {

// Nine binary 3x3x3 surface masks, stored as offset lists (dz,dy,dx in
// {-1,0,1}). Canonical order: the axis-normal mid-planes z,y,x, then the
// six diagonal planes sorted by their (nz,ny,nx) normal lexicographically.
// Offsets within an element ascend lexicographically. Each element has
// exactly 9 voxels and contains the center.
struct StructuringElementSet {
  std::array<std::array<std::array<int, 3>, 9>, 9> elements;
  static constexpr int h = 1;  // operator size: 3x3x3 neighborhoods
};

const StructuringElementSet& structuring_elements();

// SI u(x) = sup_B inf_{y in x+B} u(y). Requires shape >= (3,3,3).
Volume3D si(const Volume3D& vol);

// IS u(x) = inf_B sup_{y in x+B} u(y); the dual of si.
Volume3D is_op(const Volume3D& vol);

// (SI o IS)^mu; mu = 0 is the identity. Approximates mean-curvature motion.
Volume3D curvature_smooth(const Volume3D& vol, int mu);

// Plain serial implementations with an independently derived plane
// enumeration. Kept as the reference for the OpenMP kernels (tests compare
// bitwise) and as the baseline in the benchmark target.
namespace reference {
Volume3D si(const Volume3D& vol);
Volume3D is_op(const Volume3D& vol);
}  // namespace reference

}  // namespace morphseg
