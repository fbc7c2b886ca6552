#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "morphseg/rng.hpp"
#include "morphseg/volume_io.hpp"

using namespace morphseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("morphseg_io_" +
            std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Volume3D random_volume(int k, int m, int n, uint64_t seed) {
  SplitMix64 rng(seed);
  Volume3D v(k, m, n);
  for (auto& x : v.data) x = static_cast<float>(rng.uniform(-10.0, 10.0));
  return v;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

}  // namespace

TEST_CASE("nrrd round-trip is bit-exact") {
  TempDir dir;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Volume3D v = random_volume(3 + seed % 4, 4, 5, seed);
    std::string path = dir.file("v.nrrd");
    save_volume(v, path);
    Volume3D r = load_volume(path);
    CHECK(r.k == v.k);
    CHECK(r.m == v.m);
    CHECK(r.n == v.n);
    CHECK(r.data == v.data);
  }
}

TEST_CASE("f32 sidecar round-trip is bit-exact and keeps spacing") {
  TempDir dir;
  Volume3D v = random_volume(4, 5, 6, 77);
  v.spacing_um = {{1.0, 0.5, 0.5}};
  std::string path = dir.file("v.f32");
  save_volume(v, path);
  Volume3D r = load_volume(path);
  CHECK(r.data == v.data);
  REQUIRE(r.spacing_um.has_value());
  CHECK((*r.spacing_um)[0] == 1.0);
  CHECK((*r.spacing_um)[2] == 0.5);
}

TEST_CASE("nrrd header sizes are fastest-axis-first") {
  TempDir dir;
  Volume3D v(2, 3, 4);
  for (size_t i = 0; i < v.size(); ++i) v.data[i] = static_cast<float>(i);
  std::string path = dir.file("v.nrrd");
  save_volume(v, path);
  std::ifstream f(path);
  std::string line, sizes;
  while (std::getline(f, line))
    if (line.rfind("sizes:", 0) == 0) sizes = line;
  CHECK(sizes == "sizes: 4 3 2");
  Volume3D r = load_volume(path);
  CHECK(r.k == 2);
  CHECK(r.m == 3);
  CHECK(r.n == 4);
}

TEST_CASE("hand-written 4x4x4 header parses") {
  TempDir dir;
  std::string payload(64 * 4, '\0');
  write_text(dir.file("h.nrrd"),
             "NRRD0004\ntype: float\ndimension: 3\nsizes: 4 4 4\n"
             "encoding: raw\nendian: little\n\n" + payload);
  Volume3D v = load_volume(dir.file("h.nrrd"));
  CHECK(v.k == 4);
  CHECK(v.m == 4);
  CHECK(v.n == 4);
}

TEST_CASE("payload shorter than the header promises is rejected") {
  TempDir dir;
  std::string payload(63 * 4, '\0');
  write_text(dir.file("short.nrrd"),
             "NRRD0004\ntype: float\ndimension: 3\nsizes: 4 4 4\n"
             "encoding: raw\nendian: little\n\n" + payload);
  CHECK_THROWS_WITH_AS(load_volume(dir.file("short.nrrd")),
                       doctest::Contains("payload"), IoError);
}

TEST_CASE("trailing bytes are rejected") {
  TempDir dir;
  std::string payload(65 * 4, '\0');
  write_text(dir.file("long.nrrd"),
             "NRRD0004\ntype: float\ndimension: 3\nsizes: 4 4 4\n"
             "encoding: raw\nendian: little\n\n" + payload);
  CHECK_THROWS_AS(load_volume(dir.file("long.nrrd")), IoError);
}

TEST_CASE("unsupported header fields are named in the diagnostic") {
  TempDir dir;
  std::string payload(8 * 4, '\0');
  write_text(dir.file("t.nrrd"),
             "NRRD0004\ntype: double\ndimension: 3\nsizes: 2 2 2\n"
             "encoding: raw\nendian: little\n\n" + payload);
  CHECK_THROWS_WITH_AS(load_volume(dir.file("t.nrrd")),
                       doctest::Contains("type"), IoError);
  write_text(dir.file("e.nrrd"),
             "NRRD0004\ntype: float\ndimension: 3\nsizes: 2 2 2\n"
             "encoding: gzip\nendian: little\n\n" + payload);
  CHECK_THROWS_WITH_AS(load_volume(dir.file("e.nrrd")),
                       doctest::Contains("encoding"), IoError);
  write_text(dir.file("d.nrrd"),
             "NRRD0004\ntype: float\ndimension: 2\nsizes: 2 2 2\n"
             "encoding: raw\nendian: little\n\n" + payload);
  CHECK_THROWS_WITH_AS(load_volume(dir.file("d.nrrd")),
                       doctest::Contains("dimension"), IoError);
}

TEST_CASE("non-finite payload values are rejected") {
  TempDir dir;
  Volume3D v(2, 2, 2, 1.0f);
  v.data[3] = std::numeric_limits<float>::infinity();
  std::string path = dir.file("inf.nrrd");
  // bypass save_volume validation by writing the payload directly
  std::string header =
      "NRRD0004\ntype: float\ndimension: 3\nsizes: 2 2 2\n"
      "encoding: raw\nendian: little\n\n";
  std::ofstream f(path, std::ios::binary);
  f << header;
  f.write(reinterpret_cast<const char*>(v.data.data()), 8 * sizeof(float));
  f.close();
  CHECK_THROWS_WITH_AS(load_volume(path), doctest::Contains("finite"), IoError);
}

TEST_CASE("missing file and unknown extension produce errors") {
  TempDir dir;
  CHECK_THROWS_AS(load_volume(dir.file("absent.nrrd")), IoError);
  CHECK_THROWS_AS(load_volume(dir.file("volume.tiff")), IoError);
  Volume3D v(2, 2, 2);
  CHECK_THROWS_AS(save_volume(v, dir.file("volume.tiff")), IoError);
  CHECK_THROWS_AS(save_volume(v, dir.file("no/such/dir/x.nrrd")), IoError);
}

TEST_CASE("f32 sidecar with bad shape is rejected") {
  TempDir dir;
  std::string payload(8 * 4, '\0');
  write_text(dir.file("v.f32"), payload);
  write_text(dir.file("v.json"), "{\"shape\": [2, 2]}");
  CHECK_THROWS_WITH_AS(load_volume(dir.file("v.f32")),
                       doctest::Contains("shape"), IoError);
}
