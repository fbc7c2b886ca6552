#include "morphseg/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "morphseg/rng.hpp"

namespace morphseg {

Adam::Adam(std::vector<ad::Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw ad::TensorError("Adam: lr must be > 0");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    auto node = params_[pi].node();
    if (node->grad.size() != node->value.size()) continue;  // untouched leaf
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < node->value.size(); ++i) {
      double g = node->grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      node->value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() { ad::zero_grad(params_); }

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) throw ad::TensorError("TrainConfig: lr must be > 0");
  if (batch_size < 2)
    throw ad::TensorError("TrainConfig: batch_size must be >= 2");
  if (steps < 0) throw ad::TensorError("TrainConfig: negative steps");
  for (int d : crop_shape)
    if (d < 8 || d % 8 != 0)
      throw ad::TensorError("TrainConfig: crop dims must be multiples of 8");
  weights.validate();
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TrainConfig cfg;
  if (j.contains("lr")) cfg.adam.lr = j["lr"];
  if (j.contains("beta1")) cfg.adam.beta1 = j["beta1"];
  if (j.contains("beta2")) cfg.adam.beta2 = j["beta2"];
  if (j.contains("adam_eps")) cfg.adam.eps = j["adam_eps"];
  if (j.contains("batch_size")) cfg.batch_size = j["batch_size"];
  if (j.contains("steps")) cfg.steps = j["steps"];
  if (j.contains("crop_shape"))
    for (int a = 0; a < 3; ++a) cfg.crop_shape[a] = j["crop_shape"][a];
  if (j.contains("seed")) cfg.seed = j["seed"];
  if (j.contains("checkpoint_every")) cfg.checkpoint_every = j["checkpoint_every"];
  if (j.contains("dataset_norm")) cfg.dataset_norm = j["dataset_norm"];
  if (j.contains("lambdas")) {
    auto& l = j["lambdas"];
    cfg.weights.lambda1 = l[0];
    cfg.weights.lambda2 = l[1];
    cfg.weights.lambda3 = l[2];
    cfg.weights.lambda4 = l[3];
    cfg.weights.lambda5 = l[4];
    cfg.weights.lambda6 = l[5];
  }
  if (j.contains("alpha")) cfg.weights.alpha = j["alpha"];
  if (j.contains("beta")) cfg.weights.beta = j["beta"];
  if (j.contains("ac_use_sbar")) cfg.loss_options.ac_use_sbar = j["ac_use_sbar"];
  if (j.contains("tight_literal"))
    cfg.loss_options.tight_literal = j["tight_literal"];
  if (j.contains("mv_literal")) cfg.loss_options.mv_literal = j["mv_literal"];
  if (j.contains("detach_gamma")) cfg.loss_options.detach_gamma = j["detach_gamma"];
  cfg.validate();
  return cfg;
}

namespace {

ad::Tensor batch_from_crops(const std::vector<Volume3D>& crops) {
  const Volume3D& first = crops.front();
  std::vector<double> values;
  values.reserve(crops.size() * first.size());
  for (const Volume3D& c : crops)
    for (float v : c.data) values.push_back(v);
  return ad::constant({static_cast<int>(crops.size()), 1, first.k, first.m,
                       first.n},
                      std::move(values));
}

TrainResult run_loop(Network& net, const std::vector<Volume3D>& volumes,
                     const TrainConfig& cfg, const FinetuneBudget* budget,
                     const std::optional<std::string>& checkpoint_prefix,
                     const std::optional<std::string>& log_path) {
  cfg.validate();
  if (volumes.empty()) throw ad::TensorError("train: no volumes");
  for (const Volume3D& v : volumes) {
    if (v.k < cfg.crop_shape[0] || v.m < cfg.crop_shape[1] ||
        v.n < cfg.crop_shape[2])
      throw ad::TensorError("train: volume smaller than crop_shape");
  }

  std::ofstream log_stream;
  if (log_path) {
    log_stream.open(*log_path);
    if (!log_stream)
      throw ad::TensorError("train: cannot open log file " + *log_path);
  }

  SplitMix64 rng(cfg.seed);
  Adam opt(net.parameters(), cfg.adam);
  TrainResult result;

  int64_t max_steps = budget && budget->steps > 0
                          ? budget->steps
                          : static_cast<int64_t>(cfg.steps);
  auto start = std::chrono::steady_clock::now();
  auto out_of_time = [&]() {
    if (!budget || budget->seconds <= 0.0) return false;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
               .count() >= budget->seconds;
  };

  int consecutive_collapses = 0;
  for (int64_t step = 0; step < max_steps; ++step) {
    if (out_of_time()) break;
    std::vector<Volume3D> crops;
    crops.reserve(cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Volume3D& vol = volumes[rng.next_below(volumes.size())];
      crops.push_back(random_crop(vol, cfg.crop_shape, rng));
    }
    ad::Tensor batch = batch_from_crops(crops);
    try {
      NetworkOutputs outputs = net.forward(batch, /*training=*/true);
      CompoundLoss loss = compound(batch, outputs, cfg.weights,
                                   cfg.loss_options);
      opt.zero_grad();
      ad::backward(loss.total);
      opt.step();
      ++net.step_counter;
      result.log.push_back(loss.breakdown);
      if (log_stream)
        log_stream << breakdown_jsonl(net.step_counter, loss.breakdown) << "\n";
      consecutive_collapses = 0;
    } catch (const CollapsedMaskError&) {
      ++result.collapsed_steps;
      if (++consecutive_collapses > 10)
        throw ad::TensorError(
            "train: more than 10 consecutive collapsed-mask steps; "
            "training diverged");
      continue;  // fresh crops next iteration
    }
    if (checkpoint_prefix && cfg.checkpoint_every > 0 &&
        net.step_counter % cfg.checkpoint_every == 0)
      save_checkpoint(net, *checkpoint_prefix);
  }
  if (checkpoint_prefix) save_checkpoint(net, *checkpoint_prefix);
  return result;
}

}  // namespace

TrainResult train(Network& net, const std::vector<Volume3D>& volumes,
                  const TrainConfig& cfg,
                  const std::optional<std::string>& checkpoint_prefix,
                  const std::optional<std::string>& log_path) {
  return run_loop(net, volumes, cfg, nullptr, checkpoint_prefix, log_path);
}

TrainResult finetune(Network& net, const std::vector<Volume3D>& test_volumes,
                     const FinetuneBudget& budget, const TrainConfig& cfg,
                     const std::optional<std::string>& checkpoint_prefix,
                     const std::optional<std::string>& log_path) {
  if (budget.steps == 0 && budget.seconds == 0.0) {
    if (checkpoint_prefix) save_checkpoint(net, *checkpoint_prefix);
    return {};  // zero budget: identity on parameters
  }
  return run_loop(net, test_volumes, cfg, &budget, checkpoint_prefix, log_path);
}

void InferenceConfig::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (window[a] < 8 || window[a] % 8 != 0)
      throw ad::TensorError("InferenceConfig: window dims must be multiples of 8");
    if (stride[a] < 1 || stride[a] > window[a])
      throw ad::TensorError("InferenceConfig: stride must be in [1, window]");
  }
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ad::TensorError("InferenceConfig: threshold must be in (0,1)");
}

std::vector<int> window_offsets(int extent, int window, int stride) {
  std::vector<int> offsets;
  for (int o = 0; o + window <= extent; o += stride) offsets.push_back(o);
  if (offsets.empty() || offsets.back() + window < extent)
    offsets.push_back(extent - window);  // clamped final placement
  return offsets;
}

Volume3D sliding_window_segment(Network& net, const Volume3D& vol,
                                const InferenceConfig& cfg) {
  cfg.validate();
  // symmetric margins of (window - stride)/2 give interior voxels a uniform
  // sampling pattern; capped by the reflection constraint
  PadMargins margins;
  const int dims[3] = {vol.k, vol.m, vol.n};
  for (int a = 0; a < 3; ++a) {
    int pad = std::min((cfg.window[a] - cfg.stride[a]) / 2, dims[a] - 1);
    margins.lo[a] = margins.hi[a] = pad;
  }
  Volume3D padded = reflect_pad(vol, margins);
  const int pdims[3] = {padded.k, padded.m, padded.n};
  for (int a = 0; a < 3; ++a)
    if (pdims[a] < cfg.window[a])
      throw ad::TensorError(
          "sliding_window_segment: volume smaller than window after padding");

  std::vector<int> oz = window_offsets(pdims[0], cfg.window[0], cfg.stride[0]);
  std::vector<int> oy = window_offsets(pdims[1], cfg.window[1], cfg.stride[1]);
  std::vector<int> ox = window_offsets(pdims[2], cfg.window[2], cfg.stride[2]);

  std::vector<double> acc(padded.size(), 0.0);
  std::vector<int> count(padded.size(), 0);
  for (int z : oz)
    for (int y : oy)
      for (int x : ox) {
        Volume3D win = crop(padded, {z, y, x},
                            {cfg.window[0], cfg.window[1], cfg.window[2]});
        NetworkOutputs out = net.forward(ad::from_volume(win), false);
        const std::vector<double>& s = out.s.value();
        for (int dz = 0; dz < cfg.window[0]; ++dz)
          for (int dy = 0; dy < cfg.window[1]; ++dy)
            for (int dx = 0; dx < cfg.window[2]; ++dx) {
              size_t pi = padded.index(z + dz, y + dy, x + dx);
              acc[pi] += s[(static_cast<size_t>(dz) * cfg.window[1] + dy) *
                               cfg.window[2] +
                           dx];
              count[pi] += 1;
            }
      }

  Volume3D result(vol.k, vol.m, vol.n);
  for (int z = 0; z < vol.k; ++z)
    for (int y = 0; y < vol.m; ++y)
      for (int x = 0; x < vol.n; ++x) {
        size_t pi = padded.index(z + margins.lo[0], y + margins.lo[1],
                                 x + margins.lo[2]);
        result.at(z, y, x) = static_cast<float>(acc[pi] / count[pi]);
      }
  return result;
}

Volume3D threshold(const Volume3D& score_map, double t) {
  if (!(t > 0.0 && t < 1.0))
    throw VolumeError("threshold: t must lie in (0,1)");
  Volume3D out(score_map.k, score_map.m, score_map.n);
  for (size_t i = 0; i < score_map.size(); ++i)
    out.data[i] = score_map.data[i] > t ? 1.0f : 0.0f;
  return out;
}

}  // namespace morphseg
