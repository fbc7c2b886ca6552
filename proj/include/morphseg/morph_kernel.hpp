// Shared SI/IS selection kernels, templated on the scalar type so the
// solver-grade float path and the differentiable double path select
// identically (the kernels are pure comparisons, no arithmetic).
//
// Border policy: out-of-range neighbors are excluded from each plane's
// sup/inf. Every element contains the center voxel, so the reduction is
// never empty.
//
// Tie-breaking (needed by the differentiable layer): elements are visited
// in the canonical order of structuring_elements(), offsets within an
// element in ascending (dz,dy,dx); the first extremum encountered wins.
#pragma once

#include <array>
#include <cstdint>

#include "morphseg/morphology.hpp"

namespace morphseg::detail {

// One output voxel of SI (sup over elements of inf over the plane) or IS
// (inf over elements of sup over the plane). `route`, when non-null,
// receives the linear index of the input voxel the extremum came from.
template <typename T, bool IsSI>
inline T si_is_voxel(const T* in, int k, int m, int n, int z, int y, int x,
                     int64_t* route) {
  const StructuringElementSet& se = structuring_elements();
  bool have_outer = false;
  T outer{};
  int64_t outer_src = -1;
  for (const auto& elem : se.elements) {
    bool have_inner = false;
    T inner{};
    int64_t inner_src = -1;
    for (const auto& d : elem) {
      int zz = z + d[0], yy = y + d[1], xx = x + d[2];
      if (zz < 0 || zz >= k || yy < 0 || yy >= m || xx < 0 || xx >= n) continue;
      int64_t idx = (static_cast<int64_t>(zz) * m + yy) * n + xx;
      T v = in[idx];
      // SI: inner inf; IS: inner sup
      if (!have_inner || (IsSI ? (v < inner) : (v > inner))) {
        have_inner = true;
        inner = v;
        inner_src = idx;
      }
    }
    // SI: outer sup; IS: outer inf
    if (!have_outer || (IsSI ? (inner > outer) : (inner < outer))) {
      have_outer = true;
      outer = inner;
      outer_src = inner_src;
    }
  }
  if (route) *route = outer_src;
  return outer;
}

template <typename T, bool IsSI>
void si_is_kernel(const T* in, T* out, int k, int m, int n, int64_t* route) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int z = 0; z < k; ++z) {
    for (int y = 0; y < m; ++y) {
      for (int x = 0; x < n; ++x) {
        int64_t i = (static_cast<int64_t>(z) * m + y) * n + x;
        out[i] = si_is_voxel<T, IsSI>(in, k, m, n, z, y, x,
                                      route ? route + i : nullptr);
      }
    }
  }
}

}  // namespace morphseg::detail
