#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <set>

#include "morphseg/network.hpp"
#include "morphseg/rng.hpp"

using namespace morphseg;
namespace fs = std::filesystem;

namespace {

NetworkConfig tiny_config(uint64_t seed = 0) {
  NetworkConfig cfg;
  cfg.input_shape = {8, 16, 16};
  cfg.encoder_widths = {4, 4, 8};
  cfg.decoder_widths = {4, 4, 4};
  cfg.seed = seed;
  return cfg;
}

ad::Tensor random_batch(int b, std::array<int, 3> shape, uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> v(static_cast<size_t>(b) * shape[0] * shape[1] * shape[2]);
  for (auto& x : v) x = rng.next_double();
  return ad::constant({b, 1, shape[0], shape[1], shape[2]}, std::move(v));
}

}  // namespace

TEST_CASE("config validation enforces divisibility by 8") {
  NetworkConfig cfg = tiny_config();
  cfg.input_shape = {12, 16, 16};
  CHECK_THROWS_AS(cfg.validate(), ad::TensorError);
  cfg = tiny_config();
  cfg.mu = -1;
  CHECK_THROWS_AS(cfg.validate(), ad::TensorError);
  cfg = tiny_config();
  cfg.encoder_widths = {0, 4, 8};
  CHECK_THROWS_AS(cfg.validate(), ad::TensorError);
  CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("config JSON round-trip") {
  NetworkConfig cfg = tiny_config(17);
  cfg.mu = 2;
  cfg.with_reconstruction = false;
  NetworkConfig back = network_config_from_json(network_config_to_json(cfg));
  CHECK(back.input_shape == cfg.input_shape);
  CHECK(back.encoder_widths == cfg.encoder_widths);
  CHECK(back.decoder_widths == cfg.decoder_widths);
  CHECK(back.mu == cfg.mu);
  CHECK(back.seed == cfg.seed);
  CHECK(back.with_reconstruction == cfg.with_reconstruction);
}

TEST_CASE("forward output shapes match the input and lie in (0,1)") {
  Network net(tiny_config(1));
  ad::Tensor x = random_batch(2, {8, 16, 16}, 2);
  NetworkOutputs out = net.forward(x, true);
  CHECK(out.s_bar.shape() == ad::Shape{2, 1, 8, 16, 16});
  CHECK(out.s.shape() == ad::Shape{2, 1, 8, 16, 16});
  REQUIRE(out.i_rec.defined());
  CHECK(out.i_rec.shape() == ad::Shape{2, 1, 8, 16, 16});
  for (double v : out.s_bar.value()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  for (double v : out.s.value()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("inference forward omits the reconstruction and accepts batch 1") {
  Network net(tiny_config(1));
  NetworkOutputs out = net.forward(random_batch(1, {8, 16, 16}, 3), false);
  CHECK_FALSE(out.i_rec.defined());
  CHECK(out.s.shape() == ad::Shape{1, 1, 8, 16, 16});
}

TEST_CASE("a network built without reconstruction never produces i_rec") {
  NetworkConfig cfg = tiny_config(1);
  cfg.with_reconstruction = false;
  Network net(cfg);
  NetworkOutputs out = net.forward(random_batch(2, {8, 16, 16}, 4), true);
  CHECK_FALSE(out.i_rec.defined());
}

TEST_CASE("same seed gives identical parameters and outputs; different seed differs") {
  Network a(tiny_config(7)), b(tiny_config(7)), c(tiny_config(8));
  REQUIRE(a.parameters().size() == b.parameters().size());
  for (size_t i = 0; i < a.parameters().size(); ++i)
    CHECK(a.parameters()[i].value() == b.parameters()[i].value());
  ad::Tensor x = random_batch(1, {8, 16, 16}, 5);
  CHECK(a.forward(x, false).s.value() == b.forward(x, false).s.value());
  CHECK(a.forward(x, false).s.value() != c.forward(x, false).s.value());
}

TEST_CASE("parameter names are unique and aligned with tensors") {
  Network net(tiny_config(2));
  const auto& names = net.parameter_names();
  CHECK(names.size() == net.parameters().size());
  std::set<std::string> unique(names.begin(), names.end());
  CHECK(unique.size() == names.size());
}

TEST_CASE("mu=0 network has s == s_bar") {
  NetworkConfig cfg = tiny_config(3);
  cfg.mu = 0;
  Network net(cfg);
  NetworkOutputs out = net.forward(random_batch(1, {8, 16, 16}, 6), false);
  CHECK(out.s.value() == out.s_bar.value());
}

TEST_CASE("smoothing changes s relative to s_bar when mu > 0") {
  Network net(tiny_config(4));
  NetworkOutputs out = net.forward(random_batch(1, {8, 16, 16}, 7), false);
  CHECK(out.s.value() != out.s_bar.value());
}

TEST_CASE("invalid input shapes are rejected") {
  Network net(tiny_config(5));
  // fully convolutional: any spatial dims divisible by 8 are fine, others not
  CHECK_NOTHROW(net.forward(random_batch(1, {16, 16, 16}, 8), false));
  CHECK_THROWS_AS(net.forward(random_batch(1, {12, 16, 16}, 8), false),
                  ad::TensorError);
  CHECK_THROWS_AS(
      net.forward(ad::constant({1, 2, 8, 16, 16},
                               std::vector<double>(2 * 8 * 16 * 16, 0.5)),
                  false),
      ad::TensorError);
}

TEST_CASE("checkpoint round-trip restores parameters, stats and step count") {
  fs::path dir =
      fs::temp_directory_path() /
      ("morphseg_ckpt_" +
       std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
  fs::create_directories(dir);
  std::string prefix = (dir / "model").string();

  Network a(tiny_config(11));
  // perturb state so the round-trip is nontrivial
  ad::Tensor x = random_batch(2, {8, 16, 16}, 9);
  a.forward(x, true);  // updates running stats
  a.step_counter = 321;
  for (auto& p : a.parameters())
    for (auto& v : p.value()) v += 0.01;
  save_checkpoint(a, prefix);

  NetworkConfig cfg = checkpoint_config(prefix);
  CHECK(cfg.input_shape == tiny_config().input_shape);
  Network b(cfg);
  load_checkpoint(b, prefix);
  CHECK(b.step_counter == 321);
  for (size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& av = a.parameters()[i].value();
    const auto& bv = b.parameters()[i].value();
    REQUIRE(av.size() == bv.size());
    for (size_t j = 0; j < av.size(); ++j)
      CHECK(bv[j] == doctest::Approx(av[j]).epsilon(1e-6));  // f32 storage
  }
  // forwards agree to f32 precision
  NetworkOutputs oa = a.forward(x, false);
  NetworkOutputs ob = b.forward(x, false);
  for (size_t i = 0; i < oa.s.numel(); ++i)
    CHECK(ob.s.value()[i] == doctest::Approx(oa.s.value()[i]).epsilon(1e-4));
  fs::remove_all(dir);
}

TEST_CASE("loading a checkpoint with a mismatched config fails") {
  fs::path dir =
      fs::temp_directory_path() /
      ("morphseg_ckpt2_" +
       std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
  fs::create_directories(dir);
  std::string prefix = (dir / "model").string();
  Network a(tiny_config(12));
  save_checkpoint(a, prefix);
  NetworkConfig other = tiny_config(12);
  other.encoder_widths = {8, 8, 8};
  Network b(other);
  CHECK_THROWS(load_checkpoint(b, prefix));
  fs::remove_all(dir);
}
