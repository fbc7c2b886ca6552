// The six unsupervised loss terms and their weighted compound.
#pragma once

#include <string>

#include "morphseg/network.hpp"
#include "morphseg/tensor.hpp"

namespace morphseg {

struct LossWeights {
  double lambda1 = 1.0;     // active-contour term
  double lambda2 = 1e-2;    // ranking
  double lambda3 = 1e-3;    // tightness
  double lambda4 = 1e-3;    // reconstruction
  double lambda5 = 1e-3;    // variance
  double lambda6 = 1e-6;    // entropy
  double alpha = 1.0;
  double beta = 2.0;

  void validate() const;
};

struct LossOptions {
  bool ac_use_sbar = false;   // ablation: S-bar instead of S in the AC loss
  bool tight_literal = false; // raw voxel sum instead of the mean
  bool mv_literal = false;    // exp(+Var) exactly as printed
  bool detach_gamma = false;  // stop gradients through the attachment field
};

struct LossBreakdown {
  double ac = 0, rank = 0, rec = 0, tight = 0, mv = 0, me = 0;
  double total = 0;
  double c1 = 0, c2 = 0;
};

// Thrown when a soft-mask denominator collapses below epsilon.
struct CollapsedMaskError : std::runtime_error {
  bool inside_collapsed;
  explicit CollapsedMaskError(bool inside)
      : std::runtime_error(inside ? "collapsed mask: sum(S) ~ 0"
                                  : "collapsed mask: sum(1-S) ~ 0"),
        inside_collapsed(inside) {}
};

// Soft region means c1 = sum(I*S)/sum(S), c2 = sum(I*(1-S))/sum(1-S);
// differentiable through S. Denominators below 1e-6 raise CollapsedMaskError.
std::pair<ad::Tensor, ad::Tensor> region_means_soft(const ad::Tensor& image,
                                                    const ad::Tensor& s);

// Gamma = |grad s_bar|_1 ( alpha (I - c1)^2 - beta (I - c2)^2 )
ad::Tensor gamma_net(const ad::Tensor& image, const ad::Tensor& s_bar,
                     const ad::Tensor& c1, const ad::Tensor& c2, double alpha,
                     double beta);

// mean over voxels of exp(Gamma*S) where Gamma <= 0 and exp(-Gamma*(1-S))
// where Gamma > 0. Branch selection follows the forward values of Gamma.
ad::Tensor loss_ac(const ad::Tensor& gamma, const ad::Tensor& s);

ad::Tensor loss_rank(const ad::Tensor& c1, const ad::Tensor& c2);

// mean((i_rec - I)^2 + |grad i_rec|_1)
ad::Tensor loss_rec(const ad::Tensor& i_rec, const ad::Tensor& image);

ad::Tensor loss_tight(const ad::Tensor& s, bool literal_sum = false);

// default exp(-Var(S)) so minimization maximizes variance; literal keeps
// the printed exp(+Var).
ad::Tensor loss_mv(const ad::Tensor& s, bool literal_sign = false);

ad::Tensor loss_me(const ad::Tensor& s);

struct CompoundLoss {
  ad::Tensor total;  // backward through this
  LossBreakdown breakdown;
};

CompoundLoss compound(const ad::Tensor& image, const NetworkOutputs& outputs,
                      const LossWeights& w, const LossOptions& opt = {});

std::string breakdown_jsonl(int64_t step, const LossBreakdown& b);
std::string breakdown_csv_header();
std::string breakdown_csv_row(int64_t step, const LossBreakdown& b);

}  // namespace morphseg
