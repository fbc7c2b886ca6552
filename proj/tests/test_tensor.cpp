#include <doctest.h>

#include <cmath>

#include "morphseg/rng.hpp"
#include "morphseg/tensor.hpp"

using namespace morphseg;
using namespace morphseg::ad;

namespace {

Tensor random_tensor(Shape shape, uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
  SplitMix64 rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return constant(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("leaves carry shape and values") {
  Tensor t = constant({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.numel() == 6);
  CHECK(t.shape() == Shape{2, 3});
  CHECK_FALSE(t.requires_grad());
  Tensor p = param({2}, {0.5, -0.5});
  CHECK(p.requires_grad());
  CHECK(full({2, 2}, 3.0).value() == std::vector<double>(4, 3.0));
  CHECK(scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(constant({2, 2}, {1.0}), TensorError);
  CHECK_THROWS_AS(t.item(), TensorError);
}

TEST_CASE("elementwise forward values") {
  Tensor a = constant({4}, {1, -2, 3, 0});
  Tensor b = constant({4}, {2, 2, -1, 5});
  CHECK(add(a, b).value() == std::vector<double>{3, 0, 2, 5});
  CHECK(sub(a, b).value() == std::vector<double>{-1, -4, 4, -5});
  CHECK(mul(a, b).value() == std::vector<double>{2, -4, -3, 0});
  CHECK(neg(a).value() == std::vector<double>{-1, 2, -3, 0});
  CHECK(adds(a, 1.0).value() == std::vector<double>{2, -1, 4, 1});
  CHECK(muls(a, -2.0).value() == std::vector<double>{-2, 4, -6, 0});
  CHECK(abs_(a).value() == std::vector<double>{1, 2, 3, 0});
  CHECK(square(a).value() == std::vector<double>{1, 4, 9, 0});
  CHECK(relu(a).value() == std::vector<double>{1, 0, 3, 0});
  CHECK(sum(a).item() == 2.0);
  CHECK(mean(a).item() == 0.5);
  CHECK(div(a, b).value()[2] == doctest::Approx(-3.0));
  CHECK(exp_(constant({1}, {0.0})).item() == 1.0);
  CHECK(log_eps(constant({1}, {1.0}), 0.0).item() == doctest::Approx(0.0));
  CHECK(sigmoid(constant({1}, {0.0})).item() == 0.5);
}

TEST_CASE("scalar broadcast on either side") {
  Tensor a = constant({3}, {1, 2, 3});
  Tensor s = scalar(2.0);
  CHECK(mul(a, s).value() == std::vector<double>{2, 4, 6});
  CHECK(mul(s, a).value() == std::vector<double>{2, 4, 6});
  CHECK(sub(s, a).value() == std::vector<double>{1, 0, -1});
  CHECK(div(a, s).value() == std::vector<double>{0.5, 1.0, 1.5});
  Tensor w = constant({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(add(a, w), TensorError);
}

TEST_CASE("backward: simple chain d/dx sum((x+1)^2) = 2(x+1)") {
  Tensor x = param({3}, {1.0, -2.0, 0.5});
  Tensor y = sum(square(adds(x, 1.0)));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(-2.0));
  CHECK(x.grad()[2] == doctest::Approx(3.0));
}

TEST_CASE("backward on a diamond graph visits shared nodes once") {
  // y = sum(x*x + x*x) -> dy/dx = 4x
  Tensor x = param({2}, {3.0, -1.0});
  Tensor sq = mul(x, x);
  Tensor y = sum(add(sq, sq));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(12.0));
  CHECK(x.grad()[1] == doctest::Approx(-4.0));
}

TEST_CASE("repeated backward accumulates; zero_grad resets") {
  Tensor x = param({1}, {2.0});
  Tensor y = sum(square(x));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(8.0));
  zero_grad({x});
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("backward requires a scalar root") {
  Tensor x = param({2}, {1.0, 2.0});
  CHECK_THROWS_AS(backward(mul(x, x)), TensorError);
}

TEST_CASE("detach blocks gradient flow") {
  Tensor x = param({2}, {1.0, 2.0});
  Tensor y = sum(mul(detach(x), x));  // d/dx = detached values
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(1.0));
  CHECK(x.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("from_volume wraps as (1,1,k,m,n)") {
  Volume3D v(2, 3, 4, 1.5f);
  Tensor t = from_volume(v);
  CHECK(t.shape() == Shape{1, 1, 2, 3, 4});
  CHECK(t.value()[0] == 1.5);
}

TEST_CASE("grad_check passes for smooth compositions") {
  auto f = [](const Tensor& t) {
    return mean(mul(sigmoid(t), exp_(muls(square(t), -0.5))));
  };
  CHECK(grad_check(f, random_tensor({2, 5}, 1)) < 1e-6);
  auto g = [](const Tensor& t) {
    return sum(div(t, adds(square(t), 1.0)));
  };
  CHECK(grad_check(g, random_tensor({7}, 2)) < 1e-6);
  auto h = [](const Tensor& t) { return sum(log_eps(adds(square(t), 1.0))); };
  CHECK(grad_check(h, random_tensor({4}, 3)) < 1e-6);
}

TEST_CASE("grad_check catches a wrong gradient") {
  // abs evaluated inside the FD bracket: analytic slope 1, central FD 0.5
  auto f = [](const Tensor& t) { return sum(abs_(t)); };
  // away from the kink it passes
  CHECK(grad_check(f, constant({1}, {0.3})) < 1e-6);
  CHECK(grad_check(f, constant({1}, {5e-6}), 1e-5) > 0.3);
}

TEST_CASE("grad_check validates eps range") {
  Tensor x = random_tensor({3}, 4);
  auto f = [](const Tensor& t) { return sum(t); };
  CHECK_THROWS_AS(grad_check(f, x, 1e-9), TensorError);
  CHECK_THROWS_AS(grad_check(f, x, 0.5), TensorError);
}

TEST_CASE("grad_check random coordinate subset is deterministic") {
  Tensor x = random_tensor({4, 4}, 5);
  auto f = [](const Tensor& t) { return mean(square(t)); };
  double a = grad_check(f, x, 1e-5, 4, 99);
  double b = grad_check(f, x, 1e-5, 4, 99);
  CHECK(a == b);
  CHECK(a < 1e-6);
}
