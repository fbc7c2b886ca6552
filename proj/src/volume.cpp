#include "morphseg/volume.hpp"

#include <algorithm>
#include <cmath>

#include "morphseg/rng.hpp"

namespace morphseg {

Volume3D normalize(const Volume3D& vol) {
  if (vol.size() == 0) throw VolumeError("normalize: empty volume");
  double mean = 0.0;
  for (float v : vol.data) mean += v;
  mean /= static_cast<double>(vol.size());
  double var = 0.0;
  for (float v : vol.data) {
    double d = v - mean;
    var += d * d;
  }
  var /= static_cast<double>(vol.size());
  double stddev = std::sqrt(var);
  return normalize_with_stats(vol, mean, stddev);
}

Volume3D normalize_with_stats(const Volume3D& vol, double mean,
                              double stddev) {
  stddev = std::max(stddev, 1e-8);
  Volume3D out = vol;
  double lo = (vol.data[0] - mean) / stddev, hi = lo;
  for (float v : vol.data) {
    double z = (v - mean) / stddev;
    lo = std::min(lo, z);
    hi = std::max(hi, z);
  }
  double range = hi - lo;
  if (range <= 0.0) {
    std::fill(out.data.begin(), out.data.end(), 0.0f);
    return out;
  }
  for (size_t i = 0; i < vol.size(); ++i) {
    double z = (vol.data[i] - mean) / stddev;
    out.data[i] = static_cast<float>((z - lo) / range);
  }
  return out;
}

GradientFields central_gradient(const Volume3D& vol) {
  if (vol.k < 2 || vol.m < 2 || vol.n < 2)
    throw VolumeError("central_gradient: every dimension must be >= 2");
  GradientFields g{Volume3D(vol.k, vol.m, vol.n), Volume3D(vol.k, vol.m, vol.n),
                   Volume3D(vol.k, vol.m, vol.n)};
  const int k = vol.k, m = vol.m, n = vol.n;
#pragma omp parallel for collapse(2) schedule(static)
  for (int z = 0; z < k; ++z) {
    for (int y = 0; y < m; ++y) {
      for (int x = 0; x < n; ++x) {
        // one-sided at borders, central inside
        float dz = (z == 0)       ? vol.at(1, y, x) - vol.at(0, y, x)
                   : (z == k - 1) ? vol.at(k - 1, y, x) - vol.at(k - 2, y, x)
                                  : 0.5f * (vol.at(z + 1, y, x) - vol.at(z - 1, y, x));
        float dy = (y == 0)       ? vol.at(z, 1, x) - vol.at(z, 0, x)
                   : (y == m - 1) ? vol.at(z, m - 1, x) - vol.at(z, m - 2, x)
                                  : 0.5f * (vol.at(z, y + 1, x) - vol.at(z, y - 1, x));
        float dx = (x == 0)       ? vol.at(z, y, 1) - vol.at(z, y, 0)
                   : (x == n - 1) ? vol.at(z, y, n - 1) - vol.at(z, y, n - 2)
                                  : 0.5f * (vol.at(z, y, x + 1) - vol.at(z, y, x - 1));
        size_t i = vol.index(z, y, x);
        g.dz.data[i] = dz;
        g.dy.data[i] = dy;
        g.dx.data[i] = dx;
      }
    }
  }
  return g;
}

Volume3D gradient_magnitude_l1(const Volume3D& vol) {
  GradientFields g = central_gradient(vol);
  Volume3D out(vol.k, vol.m, vol.n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(vol.size()); ++i) {
    out.data[i] = std::fabs(g.dz.data[i]) + std::fabs(g.dy.data[i]) +
                  std::fabs(g.dx.data[i]);
  }
  return out;
}

namespace {
// Mirror index about the edge voxel; valid while margin < length.
inline int reflect_index(int i, int len) {
  if (i < 0) return -i;
  if (i >= len) return 2 * len - 2 - i;
  return i;
}
}  // namespace

Volume3D reflect_pad(const Volume3D& vol, const PadMargins& mg) {
  const int dims[3] = {vol.k, vol.m, vol.n};
  for (int a = 0; a < 3; ++a) {
    if (mg.lo[a] < 0 || mg.hi[a] < 0)
      throw VolumeError("reflect_pad: negative margin");
    if (mg.lo[a] >= dims[a] || mg.hi[a] >= dims[a])
      throw VolumeError("reflect_pad: margin must be smaller than axis length");
  }
  Volume3D out(vol.k + mg.lo[0] + mg.hi[0], vol.m + mg.lo[1] + mg.hi[1],
               vol.n + mg.lo[2] + mg.hi[2]);
  out.spacing_um = vol.spacing_um;
#pragma omp parallel for collapse(2) schedule(static)
  for (int z = 0; z < out.k; ++z) {
    for (int y = 0; y < out.m; ++y) {
      for (int x = 0; x < out.n; ++x) {
        int sz = reflect_index(z - mg.lo[0], vol.k);
        int sy = reflect_index(y - mg.lo[1], vol.m);
        int sx = reflect_index(x - mg.lo[2], vol.n);
        out.at(z, y, x) = vol.at(sz, sy, sx);
      }
    }
  }
  return out;
}

Volume3D crop(const Volume3D& vol, std::array<int, 3> off,
              std::array<int, 3> shape) {
  const int dims[3] = {vol.k, vol.m, vol.n};
  for (int a = 0; a < 3; ++a) {
    if (off[a] < 0 || shape[a] <= 0 || off[a] + shape[a] > dims[a])
      throw VolumeError("crop: window exceeds volume extent");
  }
  Volume3D out(shape[0], shape[1], shape[2]);
  out.spacing_um = vol.spacing_um;
  for (int z = 0; z < shape[0]; ++z)
    for (int y = 0; y < shape[1]; ++y)
      for (int x = 0; x < shape[2]; ++x)
        out.at(z, y, x) = vol.at(off[0] + z, off[1] + y, off[2] + x);
  return out;
}

Volume3D random_crop(const Volume3D& vol, std::array<int, 3> shape,
                     SplitMix64& rng) {
  const int dims[3] = {vol.k, vol.m, vol.n};
  std::array<int, 3> off{};
  for (int a = 0; a < 3; ++a) {
    if (shape[a] > dims[a])
      throw VolumeError("random_crop: crop larger than volume");
    off[a] = static_cast<int>(rng.next_below(dims[a] - shape[a] + 1));
  }
  return crop(vol, off, shape);
}

}  // namespace morphseg
