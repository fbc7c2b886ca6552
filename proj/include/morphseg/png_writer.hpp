// Minimal RGB8 PNG export (zlib-deflated, single IDAT) for slice overlays.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "morphseg/volume.hpp"

namespace morphseg {

// pixels: row-major RGB triples, size = 3*width*height.
void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& pixels);

// One PNG per z-slice named slice_0000.png ... under `dir`: the image slice
// in grayscale with the mask boundary (mask voxels with a non-mask 4-neighbor
// in-slice) drawn in red. Image values are clamped to [0,1].
void write_overlay_slices(const Volume3D& image, const Volume3D& mask,
                          const std::string& dir);

}  // namespace morphseg
