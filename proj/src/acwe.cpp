#include "morphseg/acwe.hpp"

#include <cmath>
#include <fstream>

#include "morphseg/morphology.hpp"

namespace morphseg {

void AcweParams::validate() const {
  if (!(alpha > 0.0)) throw VolumeError("AcweParams: alpha must be > 0");
  if (!(beta > 0.0)) throw VolumeError("AcweParams: beta must be > 0");
  if (mu < 0) throw VolumeError("AcweParams: mu must be >= 0");
  if (v != 0.0) throw VolumeError("AcweParams: v is fixed at 0");
  if (iterations < 1) throw VolumeError("AcweParams: iterations must be >= 1");
}

LevelSetState init_levelset(const Volume3D& image, InitMode mode, int period) {
  LevelSetState state{Volume3D(image.k, image.m, image.n), 0};
  if (mode == InitMode::MeanThreshold) {
    double mean = 0.0;
    for (float v : image.data) mean += v;
    mean /= static_cast<double>(image.size());
    for (size_t i = 0; i < image.size(); ++i)
      state.u.data[i] = image.data[i] > mean ? 1.0f : 0.0f;
  } else {
    if (period < 1) throw VolumeError("init_levelset: period must be >= 1");
    for (int z = 0; z < image.k; ++z)
      for (int y = 0; y < image.m; ++y)
        for (int x = 0; x < image.n; ++x)
          state.u.at(z, y, x) =
              ((z / period + y / period + x / period) % 2 == 0) ? 1.0f : 0.0f;
  }
  return state;
}

RegionMeans region_means(const Volume3D& image, const LevelSetState& state) {
  if (!image.same_shape(state.u))
    throw VolumeError("region_means: image/levelset shape mismatch");
  double sum_in = 0.0, sum_out = 0.0;
  long long n_in = 0, n_out = 0;
  for (size_t i = 0; i < image.size(); ++i) {
    if (state.u.data[i] != 0.0f) {
      sum_in += image.data[i];
      ++n_in;
    } else {
      sum_out += image.data[i];
      ++n_out;
    }
  }
  if (n_in == 0) throw DegenerateRegionError(true);
  if (n_out == 0) throw DegenerateRegionError(false);
  return {sum_in / n_in, sum_out / n_out};
}

Volume3D attachment(const Volume3D& image, const LevelSetState& state,
                    const RegionMeans& means, const AcweParams& params) {
  Volume3D gradmag = gradient_magnitude_l1(state.u);
  Volume3D gamma(image.k, image.m, image.n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(image.size()); ++i) {
    double d1 = image.data[i] - means.c1;
    double d2 = image.data[i] - means.c2;
    gamma.data[i] = static_cast<float>(
        gradmag.data[i] * (params.alpha * d1 * d1 - params.beta * d2 * d2));
  }
  return gamma;
}

LevelSetState acwe_step(const Volume3D& image, const LevelSetState& state,
                        const AcweParams& params) {
  RegionMeans means = region_means(image, state);
  Volume3D gamma = attachment(image, state, means, params);
  LevelSetState next{Volume3D(image.k, image.m, image.n),
                     state.iteration + 1};
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(image.size()); ++i) {
    float g = gamma.data[i];
    next.u.data[i] = g < 0.0f ? 1.0f : (g > 0.0f ? 0.0f : state.u.data[i]);
  }
  next.u = curvature_smooth(next.u, params.mu);
  return next;
}

AcweResult acwe_run(const Volume3D& image, const LevelSetState& init,
                    const AcweParams& params) {
  params.validate();
  AcweResult result;
  LevelSetState state = init;
  for (int it = 0; it < params.iterations; ++it) {
    LevelSetState next = acwe_step(image, state, params);
    long long changed = 0;
    for (size_t i = 0; i < image.size(); ++i)
      if (next.u.data[i] != state.u.data[i]) ++changed;
    RegionMeans means = region_means(image, state);
    result.log.push_back({next.iteration, changed, means.c1, means.c2});
    state = std::move(next);
    if (changed == 0) {
      result.converged = true;
      break;
    }
  }
  result.mask = std::move(state.u);
  return result;
}

void write_convergence_csv(const std::vector<ConvergenceRecord>& log,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw VolumeError("write_convergence_csv: cannot open " + path);
  out << "iteration,changed_voxels,c1,c2\n";
  for (const auto& r : log)
    out << r.iteration << "," << r.changed_voxels << "," << r.c1 << ","
        << r.c2 << "\n";
}

}  // namespace morphseg
