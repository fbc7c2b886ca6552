#include "morphseg/losses.hpp"

#include <sstream>

#include <json.hpp>

namespace morphseg {

using ad::Tensor;

void LossWeights::validate() const {
  for (double l : {lambda1, lambda2, lambda3, lambda4, lambda5, lambda6})
    if (l < 0.0) throw ad::TensorError("LossWeights: negative lambda");
  if (alpha < 0.0 || beta < 0.0)
    throw ad::TensorError("LossWeights: negative alpha/beta");
}

std::pair<Tensor, Tensor> region_means_soft(const Tensor& image,
                                            const Tensor& s) {
  if (image.shape() != s.shape())
    throw ad::TensorError("region_means_soft: shape mismatch");
  Tensor one_minus_s = adds(neg(s), 1.0);
  Tensor den1 = ad::sum(s);
  Tensor den2 = ad::sum(one_minus_s);
  constexpr double kEps = 1e-6;
  if (den1.item() < kEps) throw CollapsedMaskError(true);
  if (den2.item() < kEps) throw CollapsedMaskError(false);
  Tensor c1 = ad::div(ad::sum(ad::mul(image, s)), den1);
  Tensor c2 = ad::div(ad::sum(ad::mul(image, one_minus_s)), den2);
  return {c1, c2};
}

Tensor gamma_net(const Tensor& image, const Tensor& s_bar, const Tensor& c1,
                 const Tensor& c2, double alpha, double beta) {
  Tensor mag = ad::grad_l1(s_bar);
  Tensor inside = ad::muls(ad::square(ad::sub(image, c1)), alpha);
  Tensor outside = ad::muls(ad::square(ad::sub(image, c2)), beta);
  return ad::mul(mag, ad::sub(inside, outside));
}

Tensor loss_ac(const Tensor& gamma, const Tensor& s) {
  if (gamma.shape() != s.shape())
    throw ad::TensorError("loss_ac: shape mismatch");
  // branch indicator from the forward values; exponents are kept masked so
  // both exp arguments stay <= 0 and cannot overflow
  std::vector<double> ind(gamma.numel());
  for (size_t i = 0; i < ind.size(); ++i)
    ind[i] = gamma.value()[i] <= 0.0 ? 1.0 : 0.0;
  Tensor mask = ad::constant(gamma.shape(), std::move(ind));
  Tensor inv_mask = adds(neg(mask), 1.0);
  Tensor gamma_neg = ad::mul(mask, gamma);      // <= 0
  Tensor gamma_pos = ad::mul(inv_mask, gamma);  // >= 0
  Tensor branch_neg = ad::exp_(ad::mul(gamma_neg, s));
  Tensor branch_pos =
      ad::exp_(ad::neg(ad::mul(gamma_pos, adds(neg(s), 1.0))));
  return ad::mean(
      ad::add(ad::mul(mask, branch_neg), ad::mul(inv_mask, branch_pos)));
}

Tensor loss_rank(const Tensor& c1, const Tensor& c2) {
  return ad::exp_(ad::sub(c2, c1));
}

Tensor loss_rec(const Tensor& i_rec, const Tensor& image) {
  if (i_rec.shape() != image.shape())
    throw ad::TensorError("loss_rec: shape mismatch");
  Tensor sq = ad::square(ad::sub(i_rec, image));
  return ad::mean(ad::add(sq, ad::grad_l1(i_rec)));
}

Tensor loss_tight(const Tensor& s, bool literal_sum) {
  return literal_sum ? ad::sum(s) : ad::mean(s);
}

Tensor loss_mv(const Tensor& s, bool literal_sign) {
  Tensor var = ad::sub(ad::mean(ad::square(s)), ad::square(ad::mean(s)));
  return ad::exp_(literal_sign ? var : ad::neg(var));
}

Tensor loss_me(const Tensor& s) {
  return ad::mean(ad::neg(ad::mul(s, ad::log_eps(s))));
}

CompoundLoss compound(const Tensor& image, const NetworkOutputs& outputs,
                      const LossWeights& w, const LossOptions& opt) {
  w.validate();
  const Tensor& s = outputs.s;
  auto [c1, c2] = region_means_soft(image, s);
  Tensor gamma = gamma_net(image, outputs.s_bar, c1, c2, w.alpha, w.beta);
  if (opt.detach_gamma) gamma = ad::detach(gamma);

  CompoundLoss out;
  Tensor ac = loss_ac(gamma, opt.ac_use_sbar ? outputs.s_bar : s);
  Tensor rank = loss_rank(c1, c2);
  Tensor tight = loss_tight(s, opt.tight_literal);
  Tensor mv = loss_mv(s, opt.mv_literal);
  Tensor me = loss_me(s);

  Tensor total = ad::muls(ac, w.lambda1);
  total = ad::add(total, ad::muls(rank, w.lambda2));
  total = ad::add(total, ad::muls(tight, w.lambda3));
  if (outputs.i_rec.defined()) {
    Tensor rec = loss_rec(outputs.i_rec, image);
    out.breakdown.rec = rec.item();
    total = ad::add(total, ad::muls(rec, w.lambda4));
  } else if (w.lambda4 != 0.0) {
    throw ad::TensorError(
        "compound: lambda4 > 0 but no reconstruction output present");
  }
  total = ad::add(total, ad::muls(mv, w.lambda5));
  total = ad::add(total, ad::muls(me, w.lambda6));

  out.total = total;
  out.breakdown.ac = ac.item();
  out.breakdown.rank = rank.item();
  out.breakdown.tight = tight.item();
  out.breakdown.mv = mv.item();
  out.breakdown.me = me.item();
  out.breakdown.total = total.item();
  out.breakdown.c1 = c1.item();
  out.breakdown.c2 = c2.item();
  return out;
}

std::string breakdown_jsonl(int64_t step, const LossBreakdown& b) {
  nlohmann::json j{{"step", step}, {"ac", b.ac},       {"rank", b.rank},
                   {"rec", b.rec}, {"tight", b.tight}, {"mv", b.mv},
                   {"me", b.me},   {"total", b.total}, {"c1", b.c1},
                   {"c2", b.c2}};
  return j.dump();
}

std::string breakdown_csv_header() {
  return "step,ac,rank,rec,tight,mv,me,total,c1,c2";
}

std::string breakdown_csv_row(int64_t step, const LossBreakdown& b) {
  std::ostringstream ss;
  ss << step << "," << b.ac << "," << b.rank << "," << b.rec << "," << b.tight
     << "," << b.mv << "," << b.me << "," << b.total << "," << b.c1 << ","
     << b.c2;
  return ss.str();
}

}  // namespace morphseg
