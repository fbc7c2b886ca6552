#include "morphseg/png_writer.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <zlib.h>

#include "morphseg/volume_io.hpp"

namespace morphseg {

namespace {

uint32_t crc_update(uint32_t crc, const uint8_t* data, size_t len) {
  return static_cast<uint32_t>(
      crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void write_chunk(std::ofstream& f, const char type[4],
                 const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> head;
  put_be32(head, static_cast<uint32_t>(payload.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  f.write(type, 4);
  if (!payload.empty())
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  uint32_t crc = crc_update(crc32(0L, Z_NULL, 0),
                            reinterpret_cast<const uint8_t*>(type), 4);
  if (!payload.empty()) crc = crc_update(crc, payload.data(), payload.size());
  std::vector<uint8_t> tail;
  put_be32(tail, crc);
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png_rgb8(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& pixels) {
  if (width <= 0 || height <= 0)
    throw IoError("write_png_rgb8: non-positive image size");
  if (pixels.size() != static_cast<size_t>(width) * height * 3)
    throw IoError("write_png_rgb8: pixel buffer size mismatch");

  // filter byte 0 (None) per scanline
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (1 + 3 * width));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const uint8_t* row = pixels.data() + static_cast<size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + static_cast<size_t>(width) * 3);
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> deflated(bound);
  if (compress2(deflated.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("write_png_rgb8: deflate failed");
  deflated.resize(bound);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_png_rgb8: cannot open " + path);
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(width));
  put_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  write_chunk(f, "IHDR", ihdr);
  write_chunk(f, "IDAT", deflated);
  write_chunk(f, "IEND", {});
  if (!f) throw IoError("write_png_rgb8: write failed for " + path);
}

void write_overlay_slices(const Volume3D& image, const Volume3D& mask,
                          const std::string& dir) {
  if (!image.same_shape(mask))
    throw IoError("write_overlay_slices: image/mask shape mismatch");
  std::filesystem::create_directories(dir);
  std::vector<uint8_t> pixels(static_cast<size_t>(image.m) * image.n * 3);
  for (int z = 0; z < image.k; ++z) {
    for (int y = 0; y < image.m; ++y)
      for (int x = 0; x < image.n; ++x) {
        float v = std::clamp(image.at(z, y, x), 0.0f, 1.0f);
        uint8_t g = static_cast<uint8_t>(v * 255.0f + 0.5f);
        bool fg = mask.at(z, y, x) > 0.5f;
        bool boundary = false;
        if (fg) {
          const int d[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
          for (auto& dd : d) {
            int yy = y + dd[0], xx = x + dd[1];
            if (yy < 0 || yy >= image.m || xx < 0 || xx >= image.n ||
                mask.at(z, yy, xx) <= 0.5f) {
              boundary = true;
              break;
            }
          }
        }
        size_t p = (static_cast<size_t>(y) * image.n + x) * 3;
        if (boundary) {
          pixels[p] = 255;
          pixels[p + 1] = 0;
          pixels[p + 2] = 0;
        } else {
          pixels[p] = pixels[p + 1] = pixels[p + 2] = g;
        }
      }
    char name[32];
    std::snprintf(name, sizeof(name), "slice_%04d.png", z);
    write_png_rgb8((std::filesystem::path(dir) / name).string(), image.n,
                   image.m, pixels);
  }
}

}  // namespace morphseg
