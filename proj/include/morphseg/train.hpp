// Adam optimization, the unsupervised training / fine-tuning loops, and
// sliding-window volumetric inference.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "morphseg/losses.hpp"
#include "morphseg/network.hpp"
#include "morphseg/volume.hpp"

namespace morphseg {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<ad::Tensor> params, AdamConfig cfg);

  // one update from the accumulated grads; deterministic
  void step();
  void zero_grad();
  int64_t t() const { return t_; }

 private:
  std::vector<ad::Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 4;          // >= 2 (batch statistics)
  int steps = 2000;
  std::array<int, 3> crop_shape{8, 16, 16};  // divisible by 8
  uint64_t seed = 0;
  LossWeights weights;
  LossOptions loss_options;
  int checkpoint_every = 0;    // 0: only final
  bool dataset_norm = false;   // normalize with dataset-level statistics

  void validate() const;
};

TrainConfig train_config_from_json(const std::string& json_text);

struct TrainResult {
  std::vector<LossBreakdown> log;  // one entry per completed step
  int collapsed_steps = 0;
};

// Unsupervised loop: sample volume uniformly, random-crop a batch, forward,
// compound loss, backward, Adam. Volumes must already be normalized; labels
// are never part of the interface. Collapsed-mask steps are skipped and
// retried with fresh crops; more than 10 consecutive collapses aborts.
// `checkpoint_prefix`, when set, receives periodic and final checkpoints.
TrainResult train(Network& net, const std::vector<Volume3D>& volumes,
                  const TrainConfig& cfg,
                  const std::optional<std::string>& checkpoint_prefix = {},
                  const std::optional<std::string>& log_path = {});

struct FinetuneBudget {
  int64_t steps = 0;       // 0: unlimited
  double seconds = 0.0;    // 0: unlimited; whichever limit hits first
};

// Transductive fine-tuning: the identical loop fed the (unlabeled) test
// volumes, starting from the network's current parameters.
TrainResult finetune(Network& net, const std::vector<Volume3D>& test_volumes,
                     const FinetuneBudget& budget, const TrainConfig& cfg,
                     const std::optional<std::string>& checkpoint_prefix = {},
                     const std::optional<std::string>& log_path = {});

struct InferenceConfig {
  std::array<int, 3> window{32, 128, 128};
  std::array<int, 3> stride{8, 16, 16};
  double threshold = 0.5;

  void validate() const;
};

// Window offsets along one padded axis: 0, s, 2s, ... plus a final offset
// clamped so the last window touches the boundary. Exposed for the
// placement-enumeration oracle in the tests.
std::vector<int> window_offsets(int extent, int window, int stride);

// Reflection-pads the volume, runs the network on every window placement,
// and averages the S predictions per voxel; returns the real-valued map
// cropped back to the input extent (always input-shaped).
Volume3D sliding_window_segment(Network& net, const Volume3D& vol,
                                const InferenceConfig& cfg);

// 1 where s > t, else 0. t must lie in (0,1).
Volume3D threshold(const Volume3D& score_map, double t);

}  // namespace morphseg
