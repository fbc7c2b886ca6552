// Encoder / dual-decoder segmentation network at desk scale. A reduced
// 3-stage residual encoder exposes two skip taps; each decoder runs three
// transposed-conv upsampling blocks (the deeper tap concatenated into block
// 2, the shallower into block 3) and a final 3x3x3 transposed conv with
// sigmoid. The segmentation head is followed by mu repetitions of the
// differentiable SI o IS smoothing. The reconstruction decoder exists only
// when built for training.
#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "morphseg/tensor.hpp"

namespace morphseg {

struct NetworkConfig {
  std::array<int, 3> input_shape{32, 128, 128};  // k,m,n; dims divisible by 8
  std::array<int, 3> encoder_widths{16, 32, 64};
  std::array<int, 3> decoder_widths{16, 8, 8};
  int mu = 3;  // smoothing repetitions
  uint64_t seed = 0;
  bool reduced = true;  // desk-scale encoder (the only option implemented)
  bool with_reconstruction = true;

  void validate() const;
};

NetworkConfig network_config_from_json(const std::string& json_text);
std::string network_config_to_json(const NetworkConfig& cfg);

struct NetworkOutputs {
  ad::Tensor s_bar;  // pre-smoothing segmentation, in (0,1)
  ad::Tensor s;      // post-smoothing segmentation
  ad::Tensor i_rec;  // reconstruction; defined only in training forwards
};

class Network {
 public:
  explicit Network(const NetworkConfig& cfg);

  // input (B,1,D,H,W) with spatial dims divisible by 8. Training mode uses
  // batch statistics in the norm layers (batch >= 2) and produces i_rec.
  NetworkOutputs forward(const ad::Tensor& input, bool training);

  const NetworkConfig& config() const { return cfg_; }

  // trainable leaves in registration order, with stable names
  std::vector<ad::Tensor>& parameters() { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }

  std::vector<std::pair<std::string, ad::BatchNormState*>> norm_states();

  int64_t step_counter = 0;

 private:
  struct Impl;
  NetworkConfig cfg_;
  std::shared_ptr<Impl> impl_;
  std::vector<ad::Tensor> params_;
  std::vector<std::string> names_;
};

// Checkpoints: <prefix>.bin (all tensors concatenated, float32 little-endian,
// in manifest order) plus <prefix>.json manifest with names, shapes, norm
// running stats and the step counter.
void save_checkpoint(Network& net, const std::string& prefix);
// Network must have been built with a matching config.
void load_checkpoint(Network& net, const std::string& prefix);
// Reads just the embedded config, so callers can rebuild the network first.
NetworkConfig checkpoint_config(const std::string& prefix);

}  // namespace morphseg
