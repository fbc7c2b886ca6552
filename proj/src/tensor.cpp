#include "morphseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "morphseg/rng.hpp"
#include "tensor_detail.hpp"

namespace morphseg::ad {

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw TensorError("non-positive dimension in shape");
    n *= static_cast<size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream ss;
  ss << "(";
  for (size_t i = 0; i < s.size(); ++i) ss << (i ? "," : "") << s[i];
  ss << ")";
  return ss.str();
}

double Tensor::item() const {
  if (numel() != 1) throw TensorError("item: tensor is not scalar");
  return node_->value[0];
}

namespace detail {

std::shared_ptr<Node> new_node(Shape shape,
                               std::vector<std::shared_ptr<Node>> inputs) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.resize(shape_numel(n->shape));
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs)
    if (in->requires_grad) n->requires_grad = true;
  return n;
}

}  // namespace detail

namespace {
using detail::new_node;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": shape mismatch " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor constant(Shape shape, std::vector<double> values) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  if (values.size() != shape_numel(n->shape))
    throw TensorError("constant: value count does not match shape");
  n->value = std::move(values);
  return Tensor(n);
}

Tensor full(Shape shape, double v) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value.assign(shape_numel(n->shape), v);
  return Tensor(n);
}

Tensor scalar(double v) { return full({1}, v); }

Tensor param(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node()->requires_grad = true;
  return t;
}

Tensor detach(const Tensor& x) {
  return constant(x.shape(), x.value());
}

Tensor from_volume(const Volume3D& vol) {
  std::vector<double> v(vol.size());
  for (size_t i = 0; i < vol.size(); ++i) v[i] = vol.data[i];
  return constant({1, 1, vol.k, vol.m, vol.n}, std::move(v));
}

// ---- elementwise binaries with scalar broadcast ----

namespace {

// fwd(a,b) -> value; dfa/dfb give the local partials at index pair.
template <typename F, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F fwd,
                 DA dfa, DB dfb) {
  bool a_scalar = a.numel() == 1, b_scalar = b.numel() == 1;
  if (!a_scalar && !b_scalar) check_same_shape(a, b, name);
  const Shape& out_shape = a_scalar && !b_scalar ? b.shape() : a.shape();
  auto n = new_node(out_shape, {a.node(), b.node()});
  size_t count = n->numel();
  const std::vector<double>&va = a.value(), &vb = b.value();
  for (size_t i = 0; i < count; ++i)
    n->value[i] = fwd(va[a_scalar ? 0 : i], vb[b_scalar ? 0 : i]);
  if (n->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    n->backward_fn = [an, bn, a_scalar, b_scalar, count, dfa, dfb](Node& out) {
      const auto& va = an->value;
      const auto& vb = bn->value;
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < count; ++i)
          an->grad[a_scalar ? 0 : i] +=
              out.grad[i] * dfa(va[a_scalar ? 0 : i], vb[b_scalar ? 0 : i]);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < count; ++i)
          bn->grad[b_scalar ? 0 : i] +=
              out.grad[i] * dfb(va[a_scalar ? 0 : i], vb[b_scalar ? 0 : i]);
      }
    };
  }
  return Tensor(n);
}

template <typename F, typename D>
Tensor unary_op(const Tensor& x, F fwd, D dfdx) {
  auto n = new_node(x.shape(), {x.node()});
  size_t count = n->numel();
  for (size_t i = 0; i < count; ++i) n->value[i] = fwd(x.value()[i]);
  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn, count, dfdx](Node& out) {
      xn->ensure_grad();
      for (size_t i = 0; i < count; ++i)
        xn->grad[i] += out.grad[i] * dfdx(xn->value[i], out.value[i]);
    };
  }
  return Tensor(n);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor adds(const Tensor& x, double s) {
  return unary_op(
      x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor muls(const Tensor& x, double s) {
  return unary_op(
      x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor exp_(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log_eps(const Tensor& x, double eps) {
  return unary_op(
      x, [eps](double v) { return std::log(v + eps); },
      [eps](double v, double) { return 1.0 / (v + eps); });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor abs_(const Tensor& x) {
  // subgradient 0 at the kink
  return unary_op(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sum(const Tensor& x) {
  auto n = new_node({1}, {x.node()});
  double s = 0.0;
  for (double v : x.value()) s += v;
  n->value[0] = s;
  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn](Node& out) {
      xn->ensure_grad();
      for (double& g : xn->grad) g += out.grad[0];
    };
  }
  return Tensor(n);
}

Tensor mean(const Tensor& x) {
  size_t count = x.numel();
  return muls(sum(x), 1.0 / static_cast<double>(count));
}

// ---- engine ----

void backward(const Tensor& root) {
  if (root.numel() != 1) throw TensorError("backward: root must be scalar");
  // iterative post-order topological sort
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->inputs.size()) {
      Node* next = node->inputs[child++].get();
      if (next->requires_grad && !visited.count(next)) {
        visited.insert(next);
        stack.push_back({next, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // interior grads are per-call scratch; only leaves accumulate across calls
  for (Node* node : order)
    if (node->backward_fn && !node->grad.empty())
      std::fill(node->grad.begin(), node->grad.end(), 0.0);
  root.node()->ensure_grad();
  root.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->requires_grad && node->backward_fn) node->backward_fn(*node);
  }
}

void zero_grad(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    auto n = p.node();
    std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x0, double eps, int max_coords, uint64_t seed,
                  double atol) {
  if (eps < 1e-7 || eps > 1e-3)
    throw TensorError("grad_check: eps outside [1e-7, 1e-3]");
  std::vector<double> base = x0.value();
  Shape shape = x0.shape();

  Tensor leaf = param(shape, base);
  Tensor y = f(leaf);
  if (y.numel() != 1) throw TensorError("grad_check: f must be scalar-valued");
  backward(y);
  std::vector<double> analytic = leaf.grad();
  if (analytic.empty()) analytic.assign(base.size(), 0.0);

  std::vector<size_t> coords;
  if (max_coords > 0 && static_cast<size_t>(max_coords) < base.size()) {
    SplitMix64 rng(seed);
    std::unordered_set<size_t> chosen;
    while (chosen.size() < static_cast<size_t>(max_coords))
      chosen.insert(static_cast<size_t>(rng.next_below(base.size())));
    coords.assign(chosen.begin(), chosen.end());
    std::sort(coords.begin(), coords.end());
  } else {
    coords.resize(base.size());
    for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  }

  auto eval = [&](const std::vector<double>& v) {
    return f(constant(shape, v)).item();
  };

  double max_err = 0.0;
  std::vector<double> probe = base;
  for (size_t i : coords) {
    probe[i] = base[i] + eps;
    double fp = eval(probe);
    probe[i] = base[i] - eps;
    double fm = eval(probe);
    probe[i] = base[i];
    double fd = (fp - fm) / (2.0 * eps);
    double a = analytic[i];
    if (std::fabs(a) < atol && std::fabs(fd) < atol) continue;
    double err = std::fabs(a - fd) / std::max({std::fabs(a), std::fabs(fd), 1e-12});
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace morphseg::ad
