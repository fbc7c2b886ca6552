// morphseg command-line front end: phantom generation, the classical solver,
// unsupervised training / fine-tuning, sliding-window inference, metric
// reports and the finite-difference gradient suites.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "morphseg/acwe.hpp"
#include "morphseg/losses.hpp"
#include "morphseg/metrics.hpp"
#include "morphseg/morphology.hpp"
#include "morphseg/network.hpp"
#include "morphseg/phantom.hpp"
#include "morphseg/png_writer.hpp"
#include "morphseg/rng.hpp"
#include "morphseg/train.hpp"
#include "morphseg/volume_io.hpp"

namespace fs = std::filesystem;
using namespace morphseg;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

PhantomSpec phantom_spec_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  PhantomSpec spec;
  if (j.contains("shape"))
    for (int a = 0; a < 3; ++a) spec.shape[a] = j["shape"][a];
  if (j.contains("tube_count")) spec.tube_count = j["tube_count"];
  if (j.contains("radius_range")) {
    spec.radius_range.first = j["radius_range"][0];
    spec.radius_range.second = j["radius_range"][1];
  }
  if (j.contains("foreground_intensity"))
    spec.foreground_intensity = j["foreground_intensity"];
  if (j.contains("background_intensity"))
    spec.background_intensity = j["background_intensity"];
  if (j.contains("noise_sigma")) spec.noise_sigma = j["noise_sigma"];
  if (j.contains("seed")) spec.seed = j["seed"];
  if (j.contains("axis_aligned")) spec.axis_aligned = j["axis_aligned"];
  spec.validate();
  return spec;
}

// network keys optionally embedded in the train config JSON
NetworkConfig network_config_for_train(const std::string& config_text,
                                       const TrainConfig& cfg) {
  NetworkConfig ncfg;
  ncfg.input_shape = cfg.crop_shape;
  ncfg.seed = cfg.seed;
  if (!config_text.empty()) {
    nlohmann::json j = nlohmann::json::parse(config_text);
    if (j.contains("encoder_widths"))
      for (int a = 0; a < 3; ++a) ncfg.encoder_widths[a] = j["encoder_widths"][a];
    if (j.contains("decoder_widths"))
      for (int a = 0; a < 3; ++a) ncfg.decoder_widths[a] = j["decoder_widths"][a];
    if (j.contains("mu")) ncfg.mu = j["mu"];
    if (j.contains("with_reconstruction"))
      ncfg.with_reconstruction = j["with_reconstruction"];
  }
  ncfg.validate();
  return ncfg;
}

std::array<int, 3> parse_triple(const std::string& text, const char* flag) {
  std::array<int, 3> out{};
  char comma1, comma2;
  std::istringstream ss(text);
  if (!(ss >> out[0] >> comma1 >> out[1] >> comma2 >> out[2]) ||
      comma1 != ',' || comma2 != ',' || !ss.eof())
    throw VolumeError(std::string(flag) + " expects z,y,x integers");
  return out;
}

std::vector<Volume3D> load_dir(const std::string& dir, bool dataset_norm) {
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string ext = e.path().extension().string();
    if (ext == ".nrrd" || ext == ".f32") paths.push_back(e.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw IoError("no .nrrd/.f32 volumes in " + dir);
  std::vector<Volume3D> vols;
  vols.reserve(paths.size());
  for (const auto& p : paths) vols.push_back(load_volume(p));
  if (!dataset_norm) {
    for (auto& v : vols) v = normalize(v);
    return vols;
  }
  double sum = 0.0, sq = 0.0;
  size_t count = 0;
  for (const auto& v : vols)
    for (float x : v.data) {
      sum += x;
      sq += static_cast<double>(x) * x;
      ++count;
    }
  double mean = sum / count;
  double var = std::max(sq / count - mean * mean, 0.0);
  for (auto& v : vols) v = normalize_with_stats(v, mean, std::sqrt(var));
  return vols;
}

std::string checkpoint_prefix(const std::string& arg, bool for_write) {
  fs::path p(arg);
  if (for_write) {
    fs::create_directories(p);
    return (p / "model").string();
  }
  if (fs::is_directory(p)) return (p / "model").string();
  return arg;
}

int cmd_gradcheck(const std::string& scope, uint64_t seed) {
  using namespace morphseg::ad;
  SplitMix64 rng(seed);
  auto rand_tensor = [&](Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return constant(shape, std::move(v));
  };
  double worst = 0.0;
  auto report = [&](const char* name, double err, double tol) {
    worst = std::max(worst, err);
    std::cout << name << " max_rel_err=" << err << (err < tol ? "" : "  FAIL")
              << "\n";
    return err < tol;
  };

  bool ok = true;
  if (scope == "op" || scope == "end2end") {
    Tensor x = rand_tensor({2, 3});
    Tensor addend = rand_tensor({2, 3});
    ok &= report("add", grad_check([&](const Tensor& t) {
                   return sum(add(t, addend));
                 }, x), 1e-4);
    ok &= report("mul", grad_check([&](const Tensor& t) {
                   return sum(mul(t, t));
                 }, x), 1e-4);
    ok &= report("div", grad_check([&](const Tensor& t) {
                   return sum(div(scalar(1.0), adds(square(t), 1.0)));
                 }, x), 1e-4);
    ok &= report("exp", grad_check([&](const Tensor& t) {
                   return sum(exp_(t));
                 }, x), 1e-4);
    ok &= report("sigmoid", grad_check([&](const Tensor& t) {
                   return sum(sigmoid(t));
                 }, x), 1e-4);
    Tensor img = rand_tensor({1, 2, 4, 4, 4});
    Tensor w = rand_tensor({3, 2, 3, 3, 3});
    Tensor b = rand_tensor({3});
    ok &= report("conv3d", grad_check([&](const Tensor& t) {
                   return sum(conv3d(t, w, b, {1, 1, 1}, {1, 1, 1}));
                 }, img), 1e-4);
    Tensor wt = rand_tensor({2, 3, 2, 2, 2});
    ok &= report("conv_transpose3d", grad_check([&](const Tensor& t) {
                   return sum(conv_transpose3d(t, wt, b, {2, 2, 2}, {0, 0, 0}));
                 }, img), 1e-4);
    ok &= report("central_diff", grad_check([&](const Tensor& t) {
                   return sum(square(central_diff(t, 1)));
                 }, img), 1e-4);
  }
  if (scope == "layer" || scope == "end2end") {
    Tensor vol = rand_tensor({1, 1, 4, 4, 4});
    Tensor probe = rand_tensor({1, 1, 4, 4, 4});
    ok &= report("masked_pool_si", grad_check([&](const Tensor& t) {
                   return sum(mul(masked_pool_si(t), probe));
                 }, vol), 1e-4);
    ok &= report("masked_pool_is", grad_check([&](const Tensor& t) {
                   return sum(mul(masked_pool_is(t), probe));
                 }, vol), 1e-4);
    ok &= report("grad_l1", grad_check([&](const Tensor& t) {
                   return sum(grad_l1(t));
                 }, vol), 1e-4);
  }
  if (scope == "end2end") {
    NetworkConfig cfg;
    cfg.input_shape = {8, 16, 16};
    cfg.encoder_widths = {4, 4, 8};
    cfg.decoder_widths = {4, 4, 4};
    cfg.seed = seed;
    Network net(cfg);
    PhantomSpec ps;
    ps.shape = {8, 16, 16};
    ps.noise_sigma = 0.1;
    ps.seed = seed + 1;
    auto a = make_phantom(ps);
    ps.seed = seed + 2;
    auto b2 = make_phantom(ps);
    std::vector<double> vals;
    for (float v : normalize(a.image).data) vals.push_back(v);
    for (float v : normalize(b2.image).data) vals.push_back(v);
    Tensor batch = constant({2, 1, 8, 16, 16}, std::move(vals));
    LossWeights w;
    auto f = [&](const Tensor&) {
      NetworkOutputs out = net.forward(batch, true);
      return compound(batch, out, w).total;
    };
    // FD over a random subset of the parameter coordinates
    double e2e = 0.0;
    for (auto& p : net.parameters())
      e2e = std::max(e2e, grad_check([&](const Tensor&) { return f(p); }, p,
                                     1e-5, 4, seed));
    ok &= report("end2end_compound", e2e, 1e-3);
  }
  std::cout << "overall max_rel_err=" << worst << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volumetric vessel segmentation toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  bool deterministic = false;
  app.add_option("--threads", threads, "worker thread cap (0: default)");
  app.add_flag("--deterministic", deterministic,
               "fixed reduction order (results are already thread-count "
               "independent; kept for interface stability)");

  // phantom
  auto* sp = app.add_subcommand("phantom", "generate a synthetic tube pair");
  std::string spec_path, out_path, gt_path;
  sp->add_option("--spec", spec_path, "PhantomSpec JSON")->required();
  sp->add_option("--out", out_path)->required();
  sp->add_option("--gt", gt_path)->required();

  // acwe
  auto* sa = app.add_subcommand("acwe", "classical morphological solver");
  std::string a_in, a_out, a_init = "mean", a_log;
  AcweParams aparams;
  sa->add_option("--in", a_in)->required();
  sa->add_option("--out", a_out)->required();
  sa->add_option("--alpha", aparams.alpha);
  sa->add_option("--beta", aparams.beta);
  sa->add_option("--mu", aparams.mu);
  sa->add_option("--iters", aparams.iterations);
  sa->add_option("--init", a_init)->check(CLI::IsMember({"mean", "checkerboard"}));
  sa->add_option("--log", a_log, "convergence CSV");

  // train
  auto* st = app.add_subcommand("train", "unsupervised training");
  std::string t_data, t_config, t_out, t_log;
  st->add_option("--data", t_data)->required();
  st->add_option("--config", t_config, "TrainConfig JSON");
  st->add_option("--out", t_out, "checkpoint directory")->required();
  st->add_option("--log", t_log, "per-step loss JSONL");

  // finetune
  auto* sf = app.add_subcommand("finetune", "transductive fine-tuning");
  std::string f_ckpt, f_data, f_config, f_out, f_log;
  int64_t f_steps = 0;
  double f_seconds = 0.0;
  sf->add_option("--ckpt", f_ckpt)->required();
  sf->add_option("--data", f_data)->required();
  sf->add_option("--config", f_config);
  sf->add_option("--budget-steps", f_steps);
  sf->add_option("--budget-seconds", f_seconds);
  sf->add_option("--out", f_out)->required();
  sf->add_option("--log", f_log);

  // segment
  auto* ss = app.add_subcommand("segment", "sliding-window inference");
  std::string s_ckpt, s_in, s_out, s_mask, s_window, s_stride, s_overlay;
  double s_threshold = 0.5;
  ss->add_option("--ckpt", s_ckpt)->required();
  ss->add_option("--in", s_in)->required();
  ss->add_option("--out", s_out, "real-valued score map")->required();
  ss->add_option("--mask", s_mask, "thresholded binary mask");
  ss->add_option("--window", s_window, "z,y,x window size");
  ss->add_option("--stride", s_stride, "z,y,x stride");
  ss->add_option("--threshold", s_threshold);
  ss->add_option("--overlay-dir", s_overlay, "per-z PNG overlay directory");

  // eval
  auto* se = app.add_subcommand("eval", "metric report");
  std::string e_pred, e_gt, e_report;
  double e_threshold = 0.5;
  se->add_option("--pred", e_pred)->required();
  se->add_option("--gt", e_gt)->required();
  se->add_option("--report", e_report)->required();
  se->add_option("--threshold", e_threshold);

  // gradcheck
  auto* sg = app.add_subcommand("gradcheck", "finite-difference suites");
  std::string g_scope = "end2end";
  uint64_t g_seed = 0;
  sg->add_option("--scope", g_scope)->check(CLI::IsMember({"op", "layer", "end2end"}));
  sg->add_option("--seed", g_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: CLI: " << e.what() << "\n";
    return 2;
  }

  try {
    if (threads == 0)
      if (const char* env = std::getenv("MORPHSEG_THREADS"))
        threads = std::atoi(env);
    if (threads > 0) omp_set_num_threads(threads);
    if (deterministic && threads <= 0) omp_set_num_threads(omp_get_max_threads());

    if (*sp) {
      PhantomSpec spec = phantom_spec_from_json(read_file(spec_path));
      PhantomPair pair = make_phantom(spec);
      save_volume(pair.image, out_path);
      save_volume(pair.mask, gt_path);
    } else if (*sa) {
      aparams.validate();
      Volume3D image = normalize(load_volume(a_in));
      InitMode mode = a_init == "mean" ? InitMode::MeanThreshold
                                       : InitMode::Checkerboard;
      AcweResult res = acwe_run(image, init_levelset(image, mode), aparams);
      save_volume(res.mask, a_out);
      if (!a_log.empty()) write_convergence_csv(res.log, a_log);
      std::cout << "iterations=" << res.log.size()
                << " converged=" << (res.converged ? 1 : 0) << "\n";
    } else if (*st) {
      std::string cfg_text = t_config.empty() ? "" : read_file(t_config);
      TrainConfig cfg = cfg_text.empty() ? TrainConfig{}
                                         : train_config_from_json(cfg_text);
      std::vector<Volume3D> vols = load_dir(t_data, cfg.dataset_norm);
      Network net(network_config_for_train(cfg_text, cfg));
      std::string prefix = checkpoint_prefix(t_out, true);
      TrainResult r = train(net, vols, cfg, prefix,
                            t_log.empty() ? std::optional<std::string>{} : t_log);
      std::cout << "steps=" << r.log.size()
                << " collapsed=" << r.collapsed_steps << "\n";
    } else if (*sf) {
      std::string in_prefix = checkpoint_prefix(f_ckpt, false);
      NetworkConfig ncfg = checkpoint_config(in_prefix);
      Network net(ncfg);
      load_checkpoint(net, in_prefix);
      TrainConfig cfg = f_config.empty() ? TrainConfig{}
                                         : train_config_from_json(read_file(f_config));
      std::vector<Volume3D> vols = load_dir(f_data, cfg.dataset_norm);
      FinetuneBudget budget{f_steps, f_seconds};
      std::string prefix = checkpoint_prefix(f_out, true);
      TrainResult r = finetune(net, vols, budget, cfg, prefix,
                               f_log.empty() ? std::optional<std::string>{} : f_log);
      std::cout << "steps=" << r.log.size()
                << " collapsed=" << r.collapsed_steps << "\n";
    } else if (*ss) {
      std::string prefix = checkpoint_prefix(s_ckpt, false);
      NetworkConfig ncfg = checkpoint_config(prefix);
      ncfg.with_reconstruction = false;
      Network net(ncfg);
      load_checkpoint(net, prefix);
      InferenceConfig icfg;
      icfg.window = ncfg.input_shape;
      if (!s_window.empty()) icfg.window = parse_triple(s_window, "--window");
      if (!s_stride.empty()) icfg.stride = parse_triple(s_stride, "--stride");
      icfg.threshold = s_threshold;
      Volume3D image = normalize(load_volume(s_in));
      Volume3D prob = sliding_window_segment(net, image, icfg);
      save_volume(prob, s_out);
      Volume3D mask = threshold(prob, icfg.threshold);
      if (!s_mask.empty()) save_volume(mask, s_mask);
      if (!s_overlay.empty()) write_overlay_slices(image, mask, s_overlay);
    } else if (*se) {
      Volume3D pred = load_volume(e_pred);
      Volume3D gt = load_volume(e_gt);
      MetricsReport r = evaluate(pred, gt, e_threshold);
      write_report_json(r, e_report);
      std::cout << report_csv(r) << "\n";
    } else if (*sg) {
      return cmd_gradcheck(g_scope, g_seed);
    }
  } catch (const IoError& e) {
    std::cerr << "error: IO: " << e.what() << "\n";
    return 3;
  } catch (const VolumeError& e) {
    std::cerr << "error: VOLUME: " << e.what() << "\n";
    return 4;
  } catch (const CollapsedMaskError& e) {
    std::cerr << "error: COLLAPSED_MASK: " << e.what() << "\n";
    return 5;
  } catch (const DegenerateRegionError& e) {
    std::cerr << "error: DEGENERATE_REGION: " << e.what() << "\n";
    return 5;
  } catch (const ad::TensorError& e) {
    std::cerr << "error: TENSOR: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "error: RUNTIME: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
