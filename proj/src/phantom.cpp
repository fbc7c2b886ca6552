#include "morphseg/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "morphseg/rng.hpp"

namespace morphseg {

void PhantomSpec::validate() const {
  if (shape[0] < 8 || shape[1] < 16 || shape[2] < 16)
    throw VolumeError("PhantomSpec: shape must be at least (8,16,16)");
  if (tube_count < 0) throw VolumeError("PhantomSpec: negative tube_count");
  if (radius_range.first < 1.0 || radius_range.second < radius_range.first)
    throw VolumeError("PhantomSpec: radii must satisfy 1 <= min <= max");
  if (!(foreground_intensity > background_intensity))
    throw VolumeError("PhantomSpec: foreground must exceed background");
  if (foreground_intensity > 1.0 || background_intensity < 0.0)
    throw VolumeError("PhantomSpec: intensities must lie in [0,1]");
  if (noise_sigma < 0.0) throw VolumeError("PhantomSpec: negative noise_sigma");
}

namespace {

struct Capsule {
  double az, ay, ax;  // endpoint A
  double bz, by, bx;  // endpoint B
  double r;
};

double dist2_to_segment(const Capsule& c, double z, double y, double x) {
  double vz = c.bz - c.az, vy = c.by - c.ay, vx = c.bx - c.ax;
  double wz = z - c.az, wy = y - c.ay, wx = x - c.ax;
  double vv = vz * vz + vy * vy + vx * vx;
  double t = vv > 0.0 ? (wz * vz + wy * vy + wx * vx) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  double dz = wz - t * vz, dy = wy - t * vy, dx = wx - t * vx;
  return dz * dz + dy * dy + dx * dx;
}

}  // namespace

PhantomPair make_phantom(const PhantomSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  const int k = spec.shape[0], m = spec.shape[1], n = spec.shape[2];

  std::vector<Capsule> tubes;
  tubes.reserve(spec.tube_count);
  for (int t = 0; t < spec.tube_count; ++t) {
    Capsule c;
    if (spec.axis_aligned) {
      int r_lo = static_cast<int>(std::ceil(spec.radius_range.first));
      int r_hi = static_cast<int>(std::floor(spec.radius_range.second));
      if (r_hi < r_lo) r_hi = r_lo;
      c.r = static_cast<double>(
          r_lo + static_cast<int>(rng.next_below(r_hi - r_lo + 1)));
      int margin = static_cast<int>(c.r) + 1;
      int axis = static_cast<int>(rng.next_below(3));
      const int dims[3] = {k, m, n};
      double center[3];
      for (int a = 0; a < 3; ++a) {
        int lo = std::min(margin, dims[a] - 1 - margin);
        int hi = std::max(margin, dims[a] - 1 - margin);
        center[a] = static_cast<double>(
            lo + static_cast<int>(rng.next_below(hi - lo + 1)));
      }
      c.az = axis == 0 ? 0.0 : center[0];
      c.ay = axis == 1 ? 0.0 : center[1];
      c.ax = axis == 2 ? 0.0 : center[2];
      c.bz = axis == 0 ? k - 1.0 : center[0];
      c.by = axis == 1 ? m - 1.0 : center[1];
      c.bx = axis == 2 ? n - 1.0 : center[2];
      tubes.push_back(c);
      continue;
    }
    c.az = rng.uniform(0, k - 1);
    c.ay = rng.uniform(0, m - 1);
    c.ax = rng.uniform(0, n - 1);
    c.bz = rng.uniform(0, k - 1);
    c.by = rng.uniform(0, m - 1);
    c.bx = rng.uniform(0, n - 1);
    c.r = rng.uniform(spec.radius_range.first, spec.radius_range.second);
    tubes.push_back(c);
  }

  PhantomPair out{Volume3D(k, m, n), Volume3D(k, m, n)};
  for (int z = 0; z < k; ++z) {
    for (int y = 0; y < m; ++y) {
      for (int x = 0; x < n; ++x) {
        bool inside = false;
        for (const Capsule& c : tubes) {
          if (dist2_to_segment(c, z, y, x) <= c.r * c.r) {
            inside = true;
            break;
          }
        }
        out.mask.at(z, y, x) = inside ? 1.0f : 0.0f;
      }
    }
  }

  // noise drawn after geometry so the mask stream never depends on sigma
  for (size_t i = 0; i < out.image.size(); ++i) {
    double base = spec.background_intensity +
                  (spec.foreground_intensity - spec.background_intensity) *
                      out.mask.data[i];
    double noise = spec.noise_sigma > 0.0 ? rng.normal(0.0, spec.noise_sigma) : 0.0;
    out.image.data[i] = static_cast<float>(std::clamp(base + noise, 0.0, 1.0));
  }
  return out;
}

}  // namespace morphseg
