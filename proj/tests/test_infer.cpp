#include <doctest.h>

#include <cmath>

#include "morphseg/rng.hpp"
#include "morphseg/train.hpp"

using namespace morphseg;

namespace {

NetworkConfig tiny_config(uint64_t seed) {
  NetworkConfig cfg;
  cfg.input_shape = {8, 16, 16};
  cfg.encoder_widths = {4, 4, 8};
  cfg.decoder_widths = {4, 4, 4};
  cfg.seed = seed;
  cfg.with_reconstruction = false;
  return cfg;
}

// Force the network into a constant predictor: zero the final segmentation
// head weights and pin its bias, so S = sigmoid(bias) everywhere.
double make_constant_predictor(Network& net, double bias) {
  const auto& names = net.parameter_names();
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i].find("dec_seg.head") == std::string::npos) continue;
    auto& v = net.parameters()[i].value();
    if (names[i].size() >= 2 && names[i].substr(names[i].size() - 2) == ".b")
      std::fill(v.begin(), v.end(), bias);
    else
      std::fill(v.begin(), v.end(), 0.0);
  }
  return 1.0 / (1.0 + std::exp(-bias));
}

// Placement-enumeration oracle for per-voxel coverage counts.
std::vector<int> coverage_oracle(std::array<int, 3> extent,
                                 std::array<int, 3> window,
                                 std::array<int, 3> stride) {
  std::vector<std::vector<int>> offs(3);
  for (int a = 0; a < 3; ++a) {
    for (int o = 0; o + window[a] <= extent[a]; o += stride[a])
      offs[a].push_back(o);
    if (offs[a].empty() || offs[a].back() + window[a] < extent[a])
      offs[a].push_back(extent[a] - window[a]);
  }
  std::vector<int> count(static_cast<size_t>(extent[0]) * extent[1] * extent[2],
                         0);
  for (int oz : offs[0])
    for (int oy : offs[1])
      for (int ox : offs[2])
        for (int z = oz; z < oz + window[0]; ++z)
          for (int y = oy; y < oy + window[1]; ++y)
            for (int x = ox; x < ox + window[2]; ++x)
              count[(static_cast<size_t>(z) * extent[1] + y) * extent[2] +
                    x] += 1;
  return count;
}

}  // namespace

TEST_CASE("window_offsets covers the axis and clamps the final placement") {
  CHECK(window_offsets(16, 8, 4) == std::vector<int>{0, 4, 8});
  CHECK(window_offsets(10, 8, 4) == std::vector<int>{0, 2});
  CHECK(window_offsets(8, 8, 4) == std::vector<int>{0});
  CHECK(window_offsets(9, 8, 8) == std::vector<int>{0, 1});
  // every voxel is covered by at least one placement
  for (int extent : {8, 9, 13, 16, 21}) {
    std::vector<bool> covered(extent, false);
    for (int o : window_offsets(extent, 8, 3))
      for (int i = o; i < o + 8; ++i) covered[i] = true;
    for (bool c : covered) CHECK(c);
  }
}

TEST_CASE("inference config validation") {
  InferenceConfig cfg;
  cfg.window = {8, 16, 12};
  CHECK_THROWS_AS(cfg.validate(), ad::TensorError);
  cfg = InferenceConfig{};
  cfg.stride = {0, 8, 8};
  CHECK_THROWS_AS(cfg.validate(), ad::TensorError);
  cfg = InferenceConfig{};
  cfg.stride = {40, 8, 8};
  CHECK_THROWS_AS(cfg.validate(), ad::TensorError);
  cfg = InferenceConfig{};
  cfg.threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ad::TensorError);
}

TEST_CASE("constant predictor passes through exactly") {
  Network net(tiny_config(1));
  double c = make_constant_predictor(net, 0.73);
  SplitMix64 rng(2);
  Volume3D vol(12, 20, 24);
  for (auto& x : vol.data) x = static_cast<float>(rng.next_double());
  InferenceConfig cfg;
  cfg.window = {8, 16, 16};
  cfg.stride = {4, 8, 8};
  Volume3D out = sliding_window_segment(net, vol, cfg);
  REQUIRE(out.same_shape(vol));
  for (float v : out.data) CHECK(v == doctest::Approx(c).epsilon(1e-6));
}

TEST_CASE("output shape equals input shape for random volume sizes") {
  Network net(tiny_config(3));
  make_constant_predictor(net, -0.4);
  SplitMix64 rng(9);
  InferenceConfig cfg;
  cfg.window = {8, 16, 16};
  cfg.stride = {4, 8, 8};
  for (int trial = 0; trial < 10; ++trial) {
    int k = 8 + static_cast<int>(rng.next_below(12));
    int m = 16 + static_cast<int>(rng.next_below(20));
    int n = 16 + static_cast<int>(rng.next_below(20));
    Volume3D vol(k, m, n, 0.5f);
    Volume3D out = sliding_window_segment(net, vol, cfg);
    CHECK(out.k == k);
    CHECK(out.m == m);
    CHECK(out.n == n);
  }
}

TEST_CASE("per-voxel coverage matches the placement-enumeration oracle") {
  for (auto& params :
       {std::array<int, 6>{16, 24, 24, 4, 8, 8},
        std::array<int, 6>{13, 18, 23, 3, 5, 7},
        std::array<int, 6>{8, 16, 16, 8, 16, 16}}) {
    std::array<int, 3> extent{params[0], params[1], params[2]};
    std::array<int, 3> stride{params[3], params[4], params[5]};
    std::array<int, 3> window{8, 16, 16};
    std::vector<int> counts = coverage_oracle(extent, window, stride);
    // independent recomputation through the library's offset enumeration
    std::vector<int> lib(counts.size(), 0);
    for (int oz : window_offsets(extent[0], window[0], stride[0]))
      for (int oy : window_offsets(extent[1], window[1], stride[1]))
        for (int ox : window_offsets(extent[2], window[2], stride[2]))
          for (int z = oz; z < oz + window[0]; ++z)
            for (int y = oy; y < oy + window[1]; ++y)
              for (int x = ox; x < ox + window[2]; ++x)
                lib[(static_cast<size_t>(z) * extent[1] + y) * extent[2] + x] +=
                    1;
    CHECK(lib == counts);
    for (int c : counts) CHECK(c >= 1);
  }
}

TEST_CASE("averaging is coverage-weighted: sum of window hits over count") {
  // with a constant predictor every voxel averages to the same constant even
  // though coverage counts differ across the volume
  Network net(tiny_config(4));
  double c = make_constant_predictor(net, 1.2);
  Volume3D vol(10, 18, 18, 0.25f);
  InferenceConfig cfg;
  cfg.window = {8, 16, 16};
  cfg.stride = {8, 16, 16};
  Volume3D out = sliding_window_segment(net, vol, cfg);
  for (float v : out.data) CHECK(v == doctest::Approx(c).epsilon(1e-6));
}

TEST_CASE("volumes smaller than the window are rejected") {
  Network net(tiny_config(5));
  Volume3D vol(4, 16, 16, 0.5f);
  InferenceConfig cfg;
  cfg.window = {8, 16, 16};
  cfg.stride = {8, 16, 16};
  // padding of (window - stride)/2 = 0 cannot lift 4 to 8
  CHECK_THROWS_AS(sliding_window_segment(net, vol, cfg), ad::TensorError);
}

TEST_CASE("threshold binarizes strictly above t") {
  Volume3D v(1, 1, 4);
  v.data = {0.2f, 0.5f, 0.50001f, 0.9f};
  Volume3D out = threshold(v, 0.5);
  CHECK(out.data == std::vector<float>{0.0f, 0.0f, 1.0f, 1.0f});
  CHECK_THROWS_AS(threshold(v, 0.0), VolumeError);
  CHECK_THROWS_AS(threshold(v, 1.0), VolumeError);
}
