#include "morphseg/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "morphseg/rng.hpp"
#include "morphseg/volume_io.hpp"

namespace morphseg {

using ad::Tensor;

void NetworkConfig::validate() const {
  for (int d : input_shape) {
    if (d < 8 || d % 8 != 0)
      throw ad::TensorError(
          "NetworkConfig: input dims must be positive multiples of 8");
  }
  if (mu < 0) throw ad::TensorError("NetworkConfig: mu must be >= 0");
  for (int w : encoder_widths)
    if (w < 1) throw ad::TensorError("NetworkConfig: bad encoder width");
  for (int w : decoder_widths)
    if (w < 1) throw ad::TensorError("NetworkConfig: bad decoder width");
}

NetworkConfig network_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  NetworkConfig cfg;
  if (j.contains("input_shape"))
    for (int a = 0; a < 3; ++a) cfg.input_shape[a] = j["input_shape"][a];
  if (j.contains("encoder_widths"))
    for (int a = 0; a < 3; ++a) cfg.encoder_widths[a] = j["encoder_widths"][a];
  if (j.contains("decoder_widths"))
    for (int a = 0; a < 3; ++a) cfg.decoder_widths[a] = j["decoder_widths"][a];
  if (j.contains("mu")) cfg.mu = j["mu"];
  if (j.contains("seed")) cfg.seed = j["seed"];
  if (j.contains("reduced")) cfg.reduced = j["reduced"];
  if (j.contains("with_reconstruction"))
    cfg.with_reconstruction = j["with_reconstruction"];
  cfg.validate();
  return cfg;
}

std::string network_config_to_json(const NetworkConfig& cfg) {
  nlohmann::json j{
      {"input_shape", cfg.input_shape},
      {"encoder_widths", cfg.encoder_widths},
      {"decoder_widths", cfg.decoder_widths},
      {"mu", cfg.mu},
      {"seed", cfg.seed},
      {"reduced", cfg.reduced},
      {"with_reconstruction", cfg.with_reconstruction},
  };
  return j.dump(2);
}

namespace {

struct ParamFactory {
  SplitMix64 rng;
  std::vector<Tensor>* params;
  std::vector<std::string>* names;

  Tensor conv_weight(const std::string& name, ad::Shape shape) {
    // Kaiming-style init over the receptive field
    size_t fan_in = 1;
    for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
    double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> v(ad::shape_numel(shape));
    for (double& x : v) x = rng.normal(0.0, stddev);
    Tensor t = ad::param(std::move(shape), std::move(v));
    params->push_back(t);
    names->push_back(name);
    return t;
  }

  Tensor fill(const std::string& name, int channels, double value) {
    Tensor t = ad::param({channels}, std::vector<double>(channels, value));
    params->push_back(t);
    names->push_back(name);
    return t;
  }
};

struct Conv3d {
  Tensor w, b;
  ad::Ints3 stride, pad;

  Conv3d() = default;
  Conv3d(ParamFactory& f, const std::string& name, int cin, int cout,
         ad::Ints3 kernel, ad::Ints3 stride_, ad::Ints3 pad_)
      : stride(stride_), pad(pad_) {
    w = f.conv_weight(name + ".w", {cout, cin, kernel[0], kernel[1], kernel[2]});
    b = f.fill(name + ".b", cout, 0.0);
  }
  Tensor operator()(const Tensor& x) const {
    return ad::conv3d(x, w, b, stride, pad);
  }
};

struct ConvT3d {
  Tensor w, b;
  ad::Ints3 stride, pad;

  ConvT3d() = default;
  ConvT3d(ParamFactory& f, const std::string& name, int cin, int cout,
          ad::Ints3 kernel, ad::Ints3 stride_, ad::Ints3 pad_)
      : stride(stride_), pad(pad_) {
    w = f.conv_weight(name + ".w", {cin, cout, kernel[0], kernel[1], kernel[2]});
    b = f.fill(name + ".b", cout, 0.0);
  }
  Tensor operator()(const Tensor& x) const {
    return ad::conv_transpose3d(x, w, b, stride, pad);
  }
};

struct Norm {
  Tensor gamma, beta;
  ad::BatchNormState state;
  std::string name;

  Norm() = default;
  Norm(ParamFactory& f, const std::string& name_, int channels)
      : state(channels), name(name_) {
    gamma = f.fill(name_ + ".gamma", channels, 1.0);
    beta = f.fill(name_ + ".beta", channels, 0.0);
  }
  Tensor operator()(const Tensor& x, bool training) {
    return ad::batch_norm(x, gamma, beta, state, training);
  }
};

struct ResBlock {
  Conv3d conv1, conv2;
  Norm bn1, bn2;
  bool projected = false;
  Conv3d proj;
  Norm proj_bn;

  ResBlock() = default;
  ResBlock(ParamFactory& f, const std::string& name, int cin, int cout,
           int stride) {
    conv1 = Conv3d(f, name + ".conv1", cin, cout, {3, 3, 3},
                   {stride, stride, stride}, {1, 1, 1});
    bn1 = Norm(f, name + ".bn1", cout);
    conv2 = Conv3d(f, name + ".conv2", cout, cout, {3, 3, 3}, {1, 1, 1},
                   {1, 1, 1});
    bn2 = Norm(f, name + ".bn2", cout);
    if (stride != 1 || cin != cout) {
      projected = true;
      proj = Conv3d(f, name + ".proj", cin, cout, {1, 1, 1},
                    {stride, stride, stride}, {0, 0, 0});
      proj_bn = Norm(f, name + ".proj_bn", cout);
    }
  }

  Tensor operator()(const Tensor& x, bool training) {
    Tensor y = ad::relu(bn1(conv1(x), training));
    y = bn2(conv2(y), training);
    Tensor shortcut = projected ? proj_bn(proj(x), training) : x;
    return ad::relu(ad::add(y, shortcut));
  }
};

// [ConvT (4,4,4)/2 + BN + ReLU, ConvT (1,3,3)/1 + BN + ReLU]
struct UpBlock {
  ConvT3d up, refine;
  Norm bn1, bn2;

  UpBlock() = default;
  UpBlock(ParamFactory& f, const std::string& name, int cin, int cout) {
    up = ConvT3d(f, name + ".up", cin, cout, {4, 4, 4}, {2, 2, 2}, {1, 1, 1});
    bn1 = Norm(f, name + ".bn1", cout);
    refine = ConvT3d(f, name + ".refine", cout, cout, {1, 3, 3}, {1, 1, 1},
                     {0, 1, 1});
    bn2 = Norm(f, name + ".bn2", cout);
  }

  Tensor operator()(const Tensor& x, bool training) {
    Tensor y = ad::relu(bn1(up(x), training));
    return ad::relu(bn2(refine(y), training));
  }
};

struct Decoder {
  UpBlock block1, block2, block3;
  ConvT3d head;

  Decoder() = default;
  Decoder(ParamFactory& f, const std::string& name,
          const std::array<int, 3>& enc, const std::array<int, 3>& dec) {
    block1 = UpBlock(f, name + ".block1", enc[2], dec[0]);
    block2 = UpBlock(f, name + ".block2", dec[0] + enc[1], dec[1]);
    block3 = UpBlock(f, name + ".block3", dec[1] + enc[0], dec[2]);
    head = ConvT3d(f, name + ".head", dec[2], 1, {3, 3, 3}, {1, 1, 1},
                   {1, 1, 1});
  }

  // encoded at 1/8 scale; tap_quarter and tap_half are the skip inputs.
  Tensor operator()(const Tensor& encoded, const Tensor& tap_quarter,
                    const Tensor& tap_half, bool training) {
    Tensor y = block1(encoded, training);
    y = block2(ad::concat_channels(y, tap_quarter), training);
    y = block3(ad::concat_channels(y, tap_half), training);
    return ad::sigmoid(head(y));
  }
};

}  // namespace

struct Network::Impl {
  Conv3d stem;
  Norm stem_bn;
  ResBlock stage1, stage2, stage3;
  Decoder dec_seg;
  bool has_rec = false;
  Decoder dec_rec;
};

Network::Network(const NetworkConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  impl_ = std::make_shared<Impl>();
  ParamFactory f{SplitMix64(cfg_.seed), &params_, &names_};
  const auto& ew = cfg_.encoder_widths;
  impl_->stem = Conv3d(f, "stem", 1, ew[0], {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
  impl_->stem_bn = Norm(f, "stem_bn", ew[0]);
  impl_->stage1 = ResBlock(f, "stage1", ew[0], ew[0], 2);
  impl_->stage2 = ResBlock(f, "stage2", ew[0], ew[1], 2);
  impl_->stage3 = ResBlock(f, "stage3", ew[1], ew[2], 2);
  impl_->dec_seg = Decoder(f, "dec_seg", ew, cfg_.decoder_widths);
  if (cfg_.with_reconstruction) {
    impl_->has_rec = true;
    impl_->dec_rec = Decoder(f, "dec_rec", ew, cfg_.decoder_widths);
  }
}

NetworkOutputs Network::forward(const ad::Tensor& input, bool training) {
  const auto& s = input.shape();
  if (s.size() != 5 || s[1] != 1)
    throw ad::TensorError("Network::forward: expected (B,1,D,H,W) input");
  for (int a = 2; a < 5; ++a)
    if (s[a] % 8 != 0)
      throw ad::TensorError(
          "Network::forward: spatial dims must be divisible by 8, got " +
          ad::shape_str(s));

  Impl& net = *impl_;
  Tensor x = ad::relu(net.stem_bn(net.stem(input), training));
  Tensor tap_half = net.stage1(x, training);           // 1/2 scale
  Tensor tap_quarter = net.stage2(tap_half, training); // 1/4 scale
  Tensor encoded = net.stage3(tap_quarter, training);  // 1/8 scale

  NetworkOutputs out;
  out.s_bar = net.dec_seg(encoded, tap_quarter, tap_half, training);
  Tensor sm = out.s_bar;
  for (int i = 0; i < cfg_.mu; ++i)
    sm = ad::masked_pool_si(ad::masked_pool_is(sm));
  out.s = sm;
  if (training && net.has_rec)
    out.i_rec = net.dec_rec(encoded, tap_quarter, tap_half, training);
  return out;
}

std::vector<std::pair<std::string, ad::BatchNormState*>> Network::norm_states() {
  std::vector<std::pair<std::string, ad::BatchNormState*>> out;
  Impl& net = *impl_;
  auto add_norm = [&out](const std::string& name, Norm& n) {
    out.push_back({name, &n.state});
  };
  auto add_res = [&](const std::string& name, ResBlock& r) {
    add_norm(name + ".bn1", r.bn1);
    add_norm(name + ".bn2", r.bn2);
    if (r.projected) add_norm(name + ".proj_bn", r.proj_bn);
  };
  auto add_dec = [&](const std::string& name, Decoder& d) {
    add_norm(name + ".block1.bn1", d.block1.bn1);
    add_norm(name + ".block1.bn2", d.block1.bn2);
    add_norm(name + ".block2.bn1", d.block2.bn1);
    add_norm(name + ".block2.bn2", d.block2.bn2);
    add_norm(name + ".block3.bn1", d.block3.bn1);
    add_norm(name + ".block3.bn2", d.block3.bn2);
  };
  add_norm("stem_bn", net.stem_bn);
  add_res("stage1", net.stage1);
  add_res("stage2", net.stage2);
  add_res("stage3", net.stage3);
  add_dec("dec_seg", net.dec_seg);
  if (net.has_rec) add_dec("dec_rec", net.dec_rec);
  return out;
}

void save_checkpoint(Network& net, const std::string& prefix) {
  nlohmann::json manifest;
  manifest["config"] = nlohmann::json::parse(network_config_to_json(net.config()));
  manifest["step"] = net.step_counter;
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw IoError(prefix + ".bin: cannot open for writing");
  long long offset = 0;
  auto& params = net.parameters();
  const auto& names = net.parameter_names();
  nlohmann::json plist = nlohmann::json::array();
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& v = params[i].value();
    std::vector<float> f32(v.begin(), v.end());
    bin.write(reinterpret_cast<const char*>(f32.data()),
              static_cast<std::streamsize>(f32.size() * sizeof(float)));
    plist.push_back({{"name", names[i]},
                     {"shape", params[i].shape()},
                     {"offset", offset}});
    offset += static_cast<long long>(f32.size());
  }
  manifest["params"] = plist;
  nlohmann::json stats = nlohmann::json::array();
  for (auto& [name, state] : net.norm_states())
    stats.push_back({{"name", name},
                     {"running_mean", state->running_mean},
                     {"running_var", state->running_var}});
  manifest["norm_stats"] = stats;
  if (!bin) throw IoError(prefix + ".bin: write failed");
  std::ofstream js(prefix + ".json");
  if (!js) throw IoError(prefix + ".json: cannot open for writing");
  js << manifest.dump(2) << "\n";
}

NetworkConfig checkpoint_config(const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  if (!js) throw IoError(prefix + ".json: cannot open");
  nlohmann::json manifest;
  js >> manifest;
  return network_config_from_json(manifest["config"].dump());
}

void load_checkpoint(Network& net, const std::string& prefix) {
  std::ifstream js(prefix + ".json");
  if (!js) throw IoError(prefix + ".json: cannot open");
  nlohmann::json manifest;
  js >> manifest;
  net.step_counter = manifest["step"];

  struct Entry {
    ad::Shape shape;
    long long offset;
  };
  std::map<std::string, Entry> index;
  for (const auto& p : manifest["params"])
    index[p["name"]] = {p["shape"].get<ad::Shape>(), p["offset"].get<long long>()};

  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!bin) throw IoError(prefix + ".bin: cannot open");
  auto& params = net.parameters();
  const auto& names = net.parameter_names();
  for (size_t i = 0; i < params.size(); ++i) {
    auto it = index.find(names[i]);
    if (it == index.end())
      throw IoError(prefix + ": checkpoint is missing parameter " + names[i]);
    if (it->second.shape != params[i].shape())
      throw IoError(prefix + ": shape mismatch for parameter " + names[i]);
    size_t count = params[i].numel();
    std::vector<float> f32(count);
    bin.seekg(it->second.offset * static_cast<long long>(sizeof(float)));
    bin.read(reinterpret_cast<char*>(f32.data()),
             static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<size_t>(bin.gcount()) != count * sizeof(float))
      throw IoError(prefix + ".bin: payload too short for " + names[i]);
    auto& v = params[i].node()->value;
    for (size_t j = 0; j < count; ++j) v[j] = f32[j];
  }

  std::map<std::string, nlohmann::json> stat_index;
  for (const auto& s : manifest["norm_stats"]) stat_index[s["name"]] = s;
  for (auto& [name, state] : net.norm_states()) {
    auto it = stat_index.find(name);
    if (it == stat_index.end())
      throw IoError(prefix + ": checkpoint is missing norm stats for " + name);
    state->running_mean = it->second["running_mean"].get<std::vector<double>>();
    state->running_var = it->second["running_var"].get<std::vector<double>>();
  }
}

}  // namespace morphseg
