// Volume file I/O. Two encodings are accepted:
//   *.nrrd       NRRD0004 text header (type: float, dimension: 3,
//                sizes: n m k with the fastest axis first, encoding: raw,
//                endian: little) followed by a blank line and the raw
//                little-endian float32 payload.
//   *.f32        raw little-endian float32 payload, with a <name>.json
//                sidecar holding {"shape":[k,m,n]} and optionally
//                {"spacing_um":[z,y,x]}.
#pragma once

#include <string>

#include "morphseg/volume.hpp"

namespace morphseg {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dispatches on extension (.nrrd vs .f32). Rejects malformed headers,
// payload size mismatches and non-finite values with a diagnostic naming
// the offending field. No normalization is applied.
Volume3D load_volume(const std::string& path);

// Round-trip with load_volume is bit-exact.
void save_volume(const Volume3D& vol, const std::string& path);

}  // namespace morphseg
