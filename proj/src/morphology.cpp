#include "morphseg/morphology.hpp"

#include <algorithm>
#include <limits>

#include "morphseg/morph_kernel.hpp"

namespace morphseg {

namespace {

StructuringElementSet build_elements() {
  // Plane normals in (z,y,x): the three axes, then the six diagonals with
  // a zero component, normalized so the first nonzero component is +1.
  std::vector<std::array<int, 3>> normals = {
      {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<std::array<int, 3>> diagonals;
  for (int nz = -1; nz <= 1; ++nz)
    for (int ny = -1; ny <= 1; ++ny)
      for (int nx = -1; nx <= 1; ++nx) {
        int zeros = (nz == 0) + (ny == 0) + (nx == 0);
        if (zeros != 1) continue;
        // keep one representative per +/- pair
        if (nz < 0 || (nz == 0 && ny < 0)) continue;
        diagonals.push_back({nz, ny, nx});
      }
  std::sort(diagonals.begin(), diagonals.end());
  normals.insert(normals.end(), diagonals.begin(), diagonals.end());

  StructuringElementSet se;
  for (size_t e = 0; e < normals.size(); ++e) {
    const auto& nrm = normals[e];
    int count = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (nrm[0] * dz + nrm[1] * dy + nrm[2] * dx != 0) continue;
          se.elements[e][count++] = {dz, dy, dx};
        }
    if (count != 9)
      throw VolumeError("structuring_elements: internal plane enumeration bug");
  }
  return se;
}

void require_min_shape(const Volume3D& vol, const char* op) {
  if (vol.k < 3 || vol.m < 3 || vol.n < 3)
    throw VolumeError(std::string(op) + ": shape must be at least (3,3,3)");
}

}  // namespace

const StructuringElementSet& structuring_elements() {
  static const StructuringElementSet se = build_elements();
  return se;
}

Volume3D si(const Volume3D& vol) {
  require_min_shape(vol, "si");
  Volume3D out(vol.k, vol.m, vol.n);
  detail::si_is_kernel<float, true>(vol.data.data(), out.data.data(), vol.k,
                                    vol.m, vol.n, nullptr);
  return out;
}

Volume3D is_op(const Volume3D& vol) {
  require_min_shape(vol, "is_op");
  Volume3D out(vol.k, vol.m, vol.n);
  detail::si_is_kernel<float, false>(vol.data.data(), out.data.data(), vol.k,
                                     vol.m, vol.n, nullptr);
  return out;
}

Volume3D curvature_smooth(const Volume3D& vol, int mu) {
  if (mu < 0) throw VolumeError("curvature_smooth: mu must be >= 0");
  Volume3D u = vol;
  for (int i = 0; i < mu; ++i) u = si(is_op(u));
  return u;
}

namespace reference {

// Independent enumeration: a 3x3x3 offset belongs to plane p (one of nine
// fixed normals) iff it is orthogonal to the normal.
namespace {
constexpr int kNormals[9][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1},
                                {0, 1, -1}, {0, 1, 1}, {1, -1, 0},
                                {1, 0, -1}, {1, 0, 1}, {1, 1, 0}};
}

template <bool IsSI>
static Volume3D si_is_serial(const Volume3D& vol) {
  Volume3D out(vol.k, vol.m, vol.n);
  for (int z = 0; z < vol.k; ++z)
    for (int y = 0; y < vol.m; ++y)
      for (int x = 0; x < vol.n; ++x) {
        float outer = IsSI ? -std::numeric_limits<float>::infinity()
                           : std::numeric_limits<float>::infinity();
        for (const auto& nrm : kNormals) {
          float inner = IsSI ? std::numeric_limits<float>::infinity()
                             : -std::numeric_limits<float>::infinity();
          for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) {
                if (nrm[0] * dz + nrm[1] * dy + nrm[2] * dx != 0) continue;
                int zz = z + dz, yy = y + dy, xx = x + dx;
                if (zz < 0 || zz >= vol.k || yy < 0 || yy >= vol.m || xx < 0 ||
                    xx >= vol.n)
                  continue;
                float v = vol.at(zz, yy, xx);
                inner = IsSI ? std::min(inner, v) : std::max(inner, v);
              }
          outer = IsSI ? std::max(outer, inner) : std::min(outer, inner);
        }
        out.at(z, y, x) = outer;
      }
  return out;
}

Volume3D si(const Volume3D& vol) { return si_is_serial<true>(vol); }
Volume3D is_op(const Volume3D& vol) { return si_is_serial<false>(vol); }

}  // namespace reference

}  // namespace morphseg
