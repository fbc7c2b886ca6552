// Classical morphological ACWE: binary level set evolved by the sign of the
// image attachment field, followed by mu repetitions of SI o IS smoothing.
#pragma once

#include <string>
#include <vector>

#include "morphseg/volume.hpp"

namespace morphseg {

struct AcweParams {
  double alpha = 1.0;  // inside-term weight
  double beta = 2.0;   // outside-term weight
  int mu = 1;          // smoothing repetitions per iteration
  double v = 0.0;      // area weight, fixed 0
  int iterations = 100;

  void validate() const;
};

struct LevelSetState {
  Volume3D u;  // binary {0,1}
  int iteration = 0;
};

struct RegionMeans {
  double c1 = 0.0;  // mean intensity where u = 1
  double c2 = 0.0;  // mean intensity where u = 0
};

// Thrown when one side of the partition is empty.
struct DegenerateRegionError : std::runtime_error {
  bool inside_empty;
  explicit DegenerateRegionError(bool inside)
      : std::runtime_error(inside ? "degenerate region: inside is empty"
                                  : "degenerate region: outside is empty"),
        inside_empty(inside) {}
};

enum class InitMode { MeanThreshold, Checkerboard };

// MeanThreshold: u = 1 where I > mean(I) (strict, so a constant image gives
// all zeros). Checkerboard: alternating blocks of the given period.
LevelSetState init_levelset(const Volume3D& image, InitMode mode,
                            int checkerboard_period = 4);

RegionMeans region_means(const Volume3D& image, const LevelSetState& state);

// Gamma = |grad u|_1 ( alpha (I - c1)^2 - beta (I - c2)^2 ).
Volume3D attachment(const Volume3D& image, const LevelSetState& state,
                    const RegionMeans& means, const AcweParams& params);

// Pointwise sign update (u <- 1 if Gamma < 0, 0 if Gamma > 0, unchanged at
// exactly 0) followed by mu-fold SI o IS.
LevelSetState acwe_step(const Volume3D& image, const LevelSetState& state,
                        const AcweParams& params);

struct ConvergenceRecord {
  int iteration;
  long long changed_voxels;
  double c1, c2;
};

struct AcweResult {
  Volume3D mask;  // binary
  std::vector<ConvergenceRecord> log;
  bool converged = false;  // early-stopped on an unchanged level set
};

AcweResult acwe_run(const Volume3D& image, const LevelSetState& init,
                    const AcweParams& params);

void write_convergence_csv(const std::vector<ConvergenceRecord>& log,
                           const std::string& path);

}  // namespace morphseg
