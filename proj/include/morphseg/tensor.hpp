// Minimal reverse-mode differentiation over dense double tensors. Exactly
// the operator set the segmentation network and its losses need; graphs are
// straight-line per step, backward visits each node once in reverse
// topological order and accumulates vector-Jacobian products.
//
// Binary elementwise ops accept equal shapes or a scalar (1-element) operand
// on either side; there is no other implicit broadcasting.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphseg/volume.hpp"

namespace morphseg::ad {

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand, same size as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t numel() const { return node_->numel(); }
  std::vector<double>& value() { return node_->value; }
  const std::vector<double>& value() const { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }

  // scalar extraction; throws unless numel() == 1
  double item() const;

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// ---- leaves ----
Tensor constant(Shape shape, std::vector<double> values);
Tensor full(Shape shape, double v);
Tensor scalar(double v);
// Trainable leaf (requires_grad = true).
Tensor param(Shape shape, std::vector<double> values);
// Value copy cut off from the graph.
Tensor detach(const Tensor& x);
// Volume as a (1,1,k,m,n) constant.
Tensor from_volume(const Volume3D& vol);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // b equal-shape or scalar
Tensor neg(const Tensor& x);
Tensor adds(const Tensor& x, double s);
Tensor muls(const Tensor& x, double s);
Tensor exp_(const Tensor& x);
Tensor log_eps(const Tensor& x, double eps = 1e-8);  // log(x + eps)
Tensor square(const Tensor& x);
Tensor abs_(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- structured / NN ops (5D tensors: batch, channel, z, y, x) ----
using Ints3 = std::array<int, 3>;

// x (B,Ci,D,H,W), w (Co,Ci,kd,kh,kw), bias (Co)
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias,
              Ints3 stride, Ints3 pad);

// x (B,Ci,D,H,W), w (Ci,Co,kd,kh,kw), bias (Co); output size
// (D-1)*stride - 2*pad + kernel per spatial axis.
Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& bias,
                        Ints3 stride, Ints3 pad);

// Channelwise batch normalization. Training mode uses batch statistics
// (requires batch >= 2) and updates the running stats in place with
// momentum; inference mode uses the running stats. Variance is biased.
struct BatchNormState {
  std::vector<double> running_mean, running_var;  // per channel
  explicit BatchNormState(int channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training,
                  double momentum = 0.1, double eps = 1e-5);

Tensor max_pool3d(const Tensor& x, Ints3 kernel, Ints3 stride);

Tensor concat_channels(const Tensor& a, const Tensor& b);

// Central-difference derivative along one spatial axis (0=z,1=y,2=x) as a
// fixed linear stencil: central in the interior, one-sided at the borders.
Tensor central_diff(const Tensor& x, int spatial_axis);

// |d/dz| + |d/dy| + |d/dx|
Tensor grad_l1(const Tensor& x);

// Differentiable morphological pooling layers (channels must be 1, spatial
// dims >= 3). Forward is bit-identical to morphology::si / is_op; backward
// routes each output voxel's gradient to its arg-extremum input voxel
// (ties: lowest element index, then lowest voxel linear index).
Tensor masked_pool_si(const Tensor& x);
Tensor masked_pool_is(const Tensor& x);

// ---- engine ----

// Accumulates grads for every reachable node with requires_grad. Root must
// be scalar. Leaf grads accumulate across calls (zero via zero_grad);
// interior-node grads are per-call scratch and reset on entry.
void backward(const Tensor& root);

void zero_grad(const std::vector<Tensor>& params);

// Central finite differences of a scalar-valued function against the
// backward gradient. Returns the max relative error with denominator
// max(|analytic|, |fd|, 1e-12); coordinates where both magnitudes are below
// `atol` are treated as matching (FD cancellation noise otherwise dominates
// exact zeros). When max_coords > 0, a seeded random coordinate subset is
// checked instead of all of them.
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x0, double eps = 1e-5, int max_coords = -1,
                  uint64_t seed = 0, double atol = 1e-8);

}  // namespace morphseg::ad
