// Dense 3D scalar volumes: the carrier type for images, masks, level sets
// and loss fields. Axis order is (z,y,x) = (k,m,n) with x fastest-varying.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace morphseg {

struct VolumeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Volume3D {
  int k = 0, m = 0, n = 0;          // z, y, x voxel counts
  std::vector<float> data;          // row-major, x fastest
  std::optional<std::array<double, 3>> spacing_um;  // metadata only

  Volume3D() = default;
  Volume3D(int k_, int m_, int n_, float fill = 0.0f)
      : k(k_), m(m_), n(n_), data(checked_size(k_, m_, n_), fill) {}

  size_t size() const { return static_cast<size_t>(k) * m * n; }

  size_t index(int z, int y, int x) const {
    return (static_cast<size_t>(z) * m + y) * n + x;
  }
  float& at(int z, int y, int x) { return data[index(z, y, x)]; }
  float at(int z, int y, int x) const { return data[index(z, y, x)]; }

  bool same_shape(const Volume3D& o) const {
    return k == o.k && m == o.m && n == o.n;
  }

 private:
  static size_t checked_size(int k_, int m_, int n_) {
    if (k_ <= 0 || m_ <= 0 || n_ <= 0)
      throw VolumeError("Volume3D: non-positive shape");
    return static_cast<size_t>(k_) * m_ * n_;
  }
};

// (v - mean)/std followed by a min/max stretch to [0,1]. A constant volume
// maps to all zeros (std guarded by max(std, 1e-8)).
Volume3D normalize(const Volume3D& vol);

// Same stretch but with externally supplied statistics (dataset-level mode).
Volume3D normalize_with_stats(const Volume3D& vol, double mean, double stddev);

struct GradientFields {
  Volume3D dz, dy, dx;
};

// Central differences on interior voxels, one-sided differences at the
// borders. Requires every dimension >= 2.
GradientFields central_gradient(const Volume3D& vol);

// |dz| + |dy| + |dx| of central_gradient.
Volume3D gradient_magnitude_l1(const Volume3D& vol);

struct PadMargins {
  std::array<int, 3> lo{0, 0, 0};  // z,y,x
  std::array<int, 3> hi{0, 0, 0};
};

// Mirror reflection about the edge voxel (edge sample not duplicated):
// [a,b,c] padded by (1,1) -> [b,a,b,c,b]. Each margin must be < axis length.
Volume3D reflect_pad(const Volume3D& vol, const PadMargins& margins);

// Contiguous sub-volume starting at the given (z,y,x) offset.
Volume3D crop(const Volume3D& vol, std::array<int, 3> offset,
              std::array<int, 3> shape);

class SplitMix64;  // rng.hpp

// Uniformly random contiguous crop; deterministic given the RNG state.
Volume3D random_crop(const Volume3D& vol, std::array<int, 3> shape,
                     SplitMix64& rng);

}  // namespace morphseg
