// Synthetic vascular phantoms: unions of random capsules (cylinders with
// hemispherical caps) at a fixed foreground intensity over background,
// plus Gaussian noise. Serves as ground truth for solver and training tests.
#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "morphseg/volume.hpp"

namespace morphseg {

struct PhantomSpec {
  std::array<int, 3> shape{24, 48, 48};  // k,m,n
  int tube_count = 2;
  std::pair<double, double> radius_range{1.5, 3.0};
  double foreground_intensity = 0.8;
  double background_intensity = 0.2;
  double noise_sigma = 0.0;
  uint64_t seed = 0;
  // Snap tubes to a random coordinate axis, spanning the full volume, with
  // integer radius and integer cross-section center. The resulting masks are
  // lattice-aligned digital cylinders, which (for radius 3-4) are fixed
  // points of the SI/IS curvature smoothing; oblique capsule staircases are
  // not, which matters for solver fixed-point oracles.
  bool axis_aligned = false;

  void validate() const;
};

struct PhantomPair {
  Volume3D image;
  Volume3D mask;  // binary {0,1}
};

PhantomPair make_phantom(const PhantomSpec& spec);

}  // namespace morphseg
