// Structured 5D ops: convolutions, batch norm, pooling, stencils and the
// differentiable morphological pooling layers.
//
// Parallelization policy: forward loops parallelize over independent output
// locations, gradient loops over independent *destination* locations (gather
// form), so results are bitwise independent of thread count.
#include <algorithm>
#include <cmath>

#include "morphseg/morph_kernel.hpp"
#include "morphseg/tensor.hpp"
#include "tensor_detail.hpp"

namespace morphseg::ad {

using detail::new_node;

namespace {

void require_5d(const Tensor& x, const char* op) {
  if (x.shape().size() != 5)
    throw TensorError(std::string(op) + ": expected 5D tensor, got " +
                      shape_str(x.shape()));
}

struct Dims5 {
  int b, c, d, h, w;
  long long spatial() const {
    return static_cast<long long>(d) * h * w;
  }
  long long idx(int bb, int cc, int zz, int yy, int xx) const {
    return (((static_cast<long long>(bb) * c + cc) * d + zz) * h + yy) * w + xx;
  }
};

Dims5 dims5(const Shape& s) { return {s[0], s[1], s[2], s[3], s[4]}; }

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias,
              Ints3 stride, Ints3 pad) {
  require_5d(x, "conv3d");
  require_5d(w, "conv3d weight");
  Dims5 xd = dims5(x.shape());
  const Shape& ws = w.shape();
  int co = ws[0], ci = ws[1], kd = ws[2], kh = ws[3], kw = ws[4];
  if (ci != xd.c)
    throw TensorError("conv3d: in-channel mismatch " + shape_str(x.shape()) +
                      " vs " + shape_str(ws));
  if (bias.shape() != Shape{co})
    throw TensorError("conv3d: bias shape must be (" + std::to_string(co) + ")");
  int od = (xd.d + 2 * pad[0] - kd) / stride[0] + 1;
  int oh = (xd.h + 2 * pad[1] - kh) / stride[1] + 1;
  int ow = (xd.w + 2 * pad[2] - kw) / stride[2] + 1;
  if (od <= 0 || oh <= 0 || ow <= 0)
    throw TensorError("conv3d: kernel larger than padded input");

  auto n = new_node({xd.b, co, od, oh, ow}, {x.node(), w.node(), bias.node()});
  Dims5 yd = dims5(n->shape);
  const double* xv = x.value().data();
  const double* wv = w.value().data();
  const double* bv = bias.value().data();
  double* yv = n->value.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < xd.b; ++b) {
    for (int c = 0; c < co; ++c) {
      for (int oz = 0; oz < od; ++oz)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            double acc = bv[c];
            for (int ic = 0; ic < ci; ++ic)
              for (int fz = 0; fz < kd; ++fz) {
                int iz = oz * stride[0] - pad[0] + fz;
                if (iz < 0 || iz >= xd.d) continue;
                for (int fy = 0; fy < kh; ++fy) {
                  int iy = oy * stride[1] - pad[1] + fy;
                  if (iy < 0 || iy >= xd.h) continue;
                  for (int fx = 0; fx < kw; ++fx) {
                    int ix = ox * stride[2] - pad[2] + fx;
                    if (ix < 0 || ix >= xd.w) continue;
                    acc += xv[xd.idx(b, ic, iz, iy, ix)] *
                           wv[(((static_cast<long long>(c) * ci + ic) * kd + fz) * kh + fy) * kw + fx];
                  }
                }
              }
            yv[yd.idx(b, c, oz, oy, ox)] = acc;
          }
    }
  }

  if (n->requires_grad) {
    auto xn = x.node();
    auto wn = w.node();
    auto bn = bias.node();
    n->backward_fn = [xn, wn, bn, xd, yd, co, ci, kd, kh, kw, stride,
                      pad](Node& out) {
      const double* gy = out.grad.data();
      const double* xv = xn->value.data();
      const double* wv = wn->value.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        double* gx = xn->grad.data();
#pragma omp parallel for collapse(2) schedule(static)
        for (int b = 0; b < xd.b; ++b) {
          for (int ic = 0; ic < ci; ++ic) {
            for (int iz = 0; iz < xd.d; ++iz)
              for (int iy = 0; iy < xd.h; ++iy)
                for (int ix = 0; ix < xd.w; ++ix) {
                  double acc = 0.0;
                  for (int c = 0; c < co; ++c)
                    for (int fz = 0; fz < kd; ++fz) {
                      int num = iz + pad[0] - fz;
                      if (num % stride[0] != 0) continue;
                      int oz = num / stride[0];
                      if (oz < 0 || oz >= yd.d) continue;
                      for (int fy = 0; fy < kh; ++fy) {
                        int numy = iy + pad[1] - fy;
                        if (numy % stride[1] != 0) continue;
                        int oy = numy / stride[1];
                        if (oy < 0 || oy >= yd.h) continue;
                        for (int fx = 0; fx < kw; ++fx) {
                          int numx = ix + pad[2] - fx;
                          if (numx % stride[2] != 0) continue;
                          int ox = numx / stride[2];
                          if (ox < 0 || ox >= yd.w) continue;
                          acc += gy[yd.idx(b, c, oz, oy, ox)] *
                                 wv[(((static_cast<long long>(c) * ci + ic) * kd + fz) * kh + fy) * kw + fx];
                        }
                      }
                    }
                  gx[xd.idx(b, ic, iz, iy, ix)] += acc;
                }
          }
        }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        double* gw = wn->grad.data();
        long long wcount = static_cast<long long>(co) * ci * kd * kh * kw;
#pragma omp parallel for schedule(static)
        for (long long wi = 0; wi < wcount; ++wi) {
          int fx = static_cast<int>(wi % kw);
          int fy = static_cast<int>((wi / kw) % kh);
          int fz = static_cast<int>((wi / (kw * kh)) % kd);
          int ic = static_cast<int>((wi / (static_cast<long long>(kw) * kh * kd)) % ci);
          int c = static_cast<int>(wi / (static_cast<long long>(kw) * kh * kd * ci));
          double acc = 0.0;
          for (int b = 0; b < xd.b; ++b)
            for (int oz = 0; oz < yd.d; ++oz) {
              int iz = oz * stride[0] - pad[0] + fz;
              if (iz < 0 || iz >= xd.d) continue;
              for (int oy = 0; oy < yd.h; ++oy) {
                int iy = oy * stride[1] - pad[1] + fy;
                if (iy < 0 || iy >= xd.h) continue;
                for (int ox = 0; ox < yd.w; ++ox) {
                  int ix = ox * stride[2] - pad[2] + fx;
                  if (ix < 0 || ix >= xd.w) continue;
                  acc += xv[xd.idx(b, ic, iz, iy, ix)] *
                         gy[yd.idx(b, c, oz, oy, ox)];
                }
              }
            }
          gw[wi] += acc;
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int c = 0; c < co; ++c) {
          double acc = 0.0;
          for (int b = 0; b < yd.b; ++b)
            for (int oz = 0; oz < yd.d; ++oz)
              for (int oy = 0; oy < yd.h; ++oy)
                for (int ox = 0; ox < yd.w; ++ox)
                  acc += gy[yd.idx(b, c, oz, oy, ox)];
          bn->grad[c] += acc;
        }
      }
    };
  }
  return Tensor(n);
}

Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& bias,
                        Ints3 stride, Ints3 pad) {
  require_5d(x, "conv_transpose3d");
  require_5d(w, "conv_transpose3d weight");
  Dims5 xd = dims5(x.shape());
  const Shape& ws = w.shape();
  int ci = ws[0], co = ws[1], kd = ws[2], kh = ws[3], kw = ws[4];
  if (ci != xd.c)
    throw TensorError("conv_transpose3d: in-channel mismatch " +
                      shape_str(x.shape()) + " vs " + shape_str(ws));
  if (bias.shape() != Shape{co})
    throw TensorError("conv_transpose3d: bias shape must be (" +
                      std::to_string(co) + ")");
  int od = (xd.d - 1) * stride[0] - 2 * pad[0] + kd;
  int oh = (xd.h - 1) * stride[1] - 2 * pad[1] + kh;
  int ow = (xd.w - 1) * stride[2] - 2 * pad[2] + kw;
  if (od <= 0 || oh <= 0 || ow <= 0)
    throw TensorError("conv_transpose3d: non-positive output size");

  auto n = new_node({xd.b, co, od, oh, ow}, {x.node(), w.node(), bias.node()});
  Dims5 yd = dims5(n->shape);
  const double* xv = x.value().data();
  const double* wv = w.value().data();
  const double* bv = bias.value().data();
  double* yv = n->value.data();

  // scatter formulation: every input voxel distributes into its output
  // window, so no per-output stride/modulo tests in the hot loops
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < xd.b; ++b) {
    for (int c = 0; c < co; ++c) {
      double* yslice = yv + yd.idx(b, c, 0, 0, 0);
      std::fill_n(yslice, static_cast<size_t>(od) * oh * ow, bv[c]);
      for (int ic = 0; ic < ci; ++ic) {
        const double* xslice = xv + xd.idx(b, ic, 0, 0, 0);
        const double* wslice =
            wv + (static_cast<long long>(ic) * co + c) * kd * kh * kw;
        for (int iz = 0; iz < xd.d; ++iz) {
          int oz0 = iz * stride[0] - pad[0];
          for (int fz = 0; fz < kd; ++fz) {
            int oz = oz0 + fz;
            if (oz < 0 || oz >= od) continue;
            for (int iy = 0; iy < xd.h; ++iy) {
              int oy0 = iy * stride[1] - pad[1];
              for (int fy = 0; fy < kh; ++fy) {
                int oy = oy0 + fy;
                if (oy < 0 || oy >= oh) continue;
                const double* xrow =
                    xslice + (static_cast<size_t>(iz) * xd.h + iy) * xd.w;
                const double* wrow = wslice + (fz * kh + fy) * kw;
                double* yrow =
                    yslice + (static_cast<size_t>(oz) * oh + oy) * ow;
                for (int ix = 0; ix < xd.w; ++ix) {
                  int ox0 = ix * stride[2] - pad[2];
                  double xval = xrow[ix];
                  for (int fx = 0; fx < kw; ++fx) {
                    int ox = ox0 + fx;
                    if (ox < 0 || ox >= ow) continue;
                    yrow[ox] += xval * wrow[fx];
                  }
                }
              }
            }
          }
        }
      }
    }
  }

  if (n->requires_grad) {
    auto xn = x.node();
    auto wn = w.node();
    auto bn = bias.node();
    n->backward_fn = [xn, wn, bn, xd, yd, co, ci, kd, kh, kw, stride,
                      pad](Node& out) {
      const double* gy = out.grad.data();
      const double* xv = xn->value.data();
      const double* wv = wn->value.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        double* gx = xn->grad.data();
#pragma omp parallel for collapse(2) schedule(static)
        for (int b = 0; b < xd.b; ++b) {
          for (int ic = 0; ic < ci; ++ic) {
            double* gxslice = gx + xd.idx(b, ic, 0, 0, 0);
            for (int c = 0; c < co; ++c) {
              const double* gyslice = gy + yd.idx(b, c, 0, 0, 0);
              const double* wslice =
                  wv + (static_cast<long long>(ic) * co + c) * kd * kh * kw;
              for (int iz = 0; iz < xd.d; ++iz) {
                int oz0 = iz * stride[0] - pad[0];
                for (int fz = 0; fz < kd; ++fz) {
                  int oz = oz0 + fz;
                  if (oz < 0 || oz >= yd.d) continue;
                  for (int iy = 0; iy < xd.h; ++iy) {
                    int oy0 = iy * stride[1] - pad[1];
                    for (int fy = 0; fy < kh; ++fy) {
                      int oy = oy0 + fy;
                      if (oy < 0 || oy >= yd.h) continue;
                      const double* gyrow =
                          gyslice +
                          (static_cast<size_t>(oz) * yd.h + oy) * yd.w;
                      const double* wrow = wslice + (fz * kh + fy) * kw;
                      double* gxrow =
                          gxslice + (static_cast<size_t>(iz) * xd.h + iy) * xd.w;
                      for (int ix = 0; ix < xd.w; ++ix) {
                        int ox0 = ix * stride[2] - pad[2];
                        double acc = 0.0;
                        for (int fx = 0; fx < kw; ++fx) {
                          int ox = ox0 + fx;
                          if (ox < 0 || ox >= yd.w) continue;
                          acc += gyrow[ox] * wrow[fx];
                        }
                        gxrow[ix] += acc;
                      }
                    }
                  }
                }
              }
            }
          }
        }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        double* gw = wn->grad.data();
        long long wcount = static_cast<long long>(co) * ci * kd * kh * kw;
#pragma omp parallel for schedule(static)
        for (long long wi = 0; wi < wcount; ++wi) {
          int fx = static_cast<int>(wi % kw);
          int fy = static_cast<int>((wi / kw) % kh);
          int fz = static_cast<int>((wi / (kw * kh)) % kd);
          int c = static_cast<int>((wi / (static_cast<long long>(kw) * kh * kd)) % co);
          int ic = static_cast<int>(wi / (static_cast<long long>(kw) * kh * kd * co));
          double acc = 0.0;
          for (int b = 0; b < xd.b; ++b) {
            const double* xslice = xv + xd.idx(b, ic, 0, 0, 0);
            const double* gyslice = gy + yd.idx(b, c, 0, 0, 0);
            for (int iz = 0; iz < xd.d; ++iz) {
              int oz = iz * stride[0] - pad[0] + fz;
              if (oz < 0 || oz >= yd.d) continue;
              for (int iy = 0; iy < xd.h; ++iy) {
                int oy = iy * stride[1] - pad[1] + fy;
                if (oy < 0 || oy >= yd.h) continue;
                const double* xrow =
                    xslice + (static_cast<size_t>(iz) * xd.h + iy) * xd.w;
                const double* gyrow =
                    gyslice + (static_cast<size_t>(oz) * yd.h + oy) * yd.w;
                for (int ix = 0; ix < xd.w; ++ix) {
                  int ox = ix * stride[2] - pad[2] + fx;
                  if (ox < 0 || ox >= yd.w) continue;
                  acc += xrow[ix] * gyrow[ox];
                }
              }
            }
          }
          gw[wi] += acc;
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int c = 0; c < co; ++c) {
          double acc = 0.0;
          for (int b = 0; b < yd.b; ++b)
            for (int oz = 0; oz < yd.d; ++oz)
              for (int oy = 0; oy < yd.h; ++oy)
                for (int ox = 0; ox < yd.w; ++ox)
                  acc += gy[yd.idx(b, c, oz, oy, ox)];
          bn->grad[c] += acc;
        }
      }
    };
  }
  return Tensor(n);
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training, double momentum,
                  double eps) {
  require_5d(x, "batch_norm");
  Dims5 xd = dims5(x.shape());
  if (gamma.shape() != Shape{xd.c} || beta.shape() != Shape{xd.c})
    throw TensorError("batch_norm: gamma/beta must have shape (" +
                      std::to_string(xd.c) + ")");
  if (static_cast<int>(state.running_mean.size()) != xd.c)
    throw TensorError("batch_norm: running-stat channel mismatch");
  if (training && xd.b < 2)
    throw TensorError("batch_norm: training mode needs batch >= 2");

  auto n = new_node(x.shape(), {x.node(), gamma.node(), beta.node()});
  const double* xv = x.value().data();
  double* yv = n->value.data();
  long long per_channel = static_cast<long long>(xd.b) * xd.spatial();

  std::vector<double> mu(xd.c), var(xd.c);
  if (training) {
#pragma omp parallel for schedule(static)
    for (int c = 0; c < xd.c; ++c) {
      double s = 0.0;
      for (int b = 0; b < xd.b; ++b)
        for (int z = 0; z < xd.d; ++z)
          for (int y = 0; y < xd.h; ++y)
            for (int xx = 0; xx < xd.w; ++xx) s += xv[xd.idx(b, c, z, y, xx)];
      mu[c] = s / per_channel;
      double v = 0.0;
      for (int b = 0; b < xd.b; ++b)
        for (int z = 0; z < xd.d; ++z)
          for (int y = 0; y < xd.h; ++y)
            for (int xx = 0; xx < xd.w; ++xx) {
              double d = xv[xd.idx(b, c, z, y, xx)] - mu[c];
              v += d * d;
            }
      var[c] = v / per_channel;
    }
    for (int c = 0; c < xd.c; ++c) {
      state.running_mean[c] =
          (1.0 - momentum) * state.running_mean[c] + momentum * mu[c];
      state.running_var[c] =
          (1.0 - momentum) * state.running_var[c] + momentum * var[c];
    }
  } else {
    mu = state.running_mean;
    var = state.running_var;
  }

  const double* gv = gamma.value().data();
  const double* bev = beta.value().data();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < xd.c; ++c) {
    double inv = 1.0 / std::sqrt(var[c] + eps);
    for (int b = 0; b < xd.b; ++b)
      for (int z = 0; z < xd.d; ++z)
        for (int y = 0; y < xd.h; ++y)
          for (int xx = 0; xx < xd.w; ++xx) {
            long long i = xd.idx(b, c, z, y, xx);
            yv[i] = gv[c] * (xv[i] - mu[c]) * inv + bev[c];
          }
  }

  if (n->requires_grad) {
    auto xn = x.node();
    auto gn = gamma.node();
    auto betan = beta.node();
    n->backward_fn = [xn, gn, betan, xd, mu, var, eps, training,
                      per_channel](Node& out) {
      const double* gy = out.grad.data();
      const double* xv = xn->value.data();
      const double* gv = gn->value.data();
      if (gn->requires_grad) gn->ensure_grad();
      if (betan->requires_grad) betan->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
#pragma omp parallel for schedule(static)
      for (int c = 0; c < xd.c; ++c) {
        double inv = 1.0 / std::sqrt(var[c] + eps);
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (int b = 0; b < xd.b; ++b)
          for (int z = 0; z < xd.d; ++z)
            for (int y = 0; y < xd.h; ++y)
              for (int xx = 0; xx < xd.w; ++xx) {
                long long i = xd.idx(b, c, z, y, xx);
                double xhat = (xv[i] - mu[c]) * inv;
                sum_gy += gy[i];
                sum_gy_xhat += gy[i] * xhat;
              }
        if (gn->requires_grad) gn->grad[c] += sum_gy_xhat;
        if (betan->requires_grad) betan->grad[c] += sum_gy;
        if (xn->requires_grad) {
          double m_gy = sum_gy / per_channel;
          double m_gy_xhat = sum_gy_xhat / per_channel;
          for (int b = 0; b < xd.b; ++b)
            for (int z = 0; z < xd.d; ++z)
              for (int y = 0; y < xd.h; ++y)
                for (int xx = 0; xx < xd.w; ++xx) {
                  long long i = xd.idx(b, c, z, y, xx);
                  double xhat = (xv[i] - mu[c]) * inv;
                  double g = training
                                 ? gv[c] * inv * (gy[i] - m_gy - xhat * m_gy_xhat)
                                 : gv[c] * inv * gy[i];
                  xn->grad[i] += g;
                }
        }
      }
    };
  }
  return Tensor(n);
}

Tensor max_pool3d(const Tensor& x, Ints3 kernel, Ints3 stride) {
  require_5d(x, "max_pool3d");
  Dims5 xd = dims5(x.shape());
  int od = (xd.d - kernel[0]) / stride[0] + 1;
  int oh = (xd.h - kernel[1]) / stride[1] + 1;
  int ow = (xd.w - kernel[2]) / stride[2] + 1;
  if (od <= 0 || oh <= 0 || ow <= 0)
    throw TensorError("max_pool3d: kernel larger than input");
  auto n = new_node({xd.b, xd.c, od, oh, ow}, {x.node()});
  Dims5 yd = dims5(n->shape);
  auto route = std::make_shared<std::vector<long long>>(n->numel());
  const double* xv = x.value().data();
  double* yv = n->value.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < xd.b; ++b) {
    for (int c = 0; c < xd.c; ++c) {
      for (int oz = 0; oz < od; ++oz)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            double best = -1.0;
            long long best_i = -1;
            bool first = true;
            for (int fz = 0; fz < kernel[0]; ++fz)
              for (int fy = 0; fy < kernel[1]; ++fy)
                for (int fx = 0; fx < kernel[2]; ++fx) {
                  long long i =
                      xd.idx(b, c, oz * stride[0] + fz, oy * stride[1] + fy,
                             ox * stride[2] + fx);
                  if (first || xv[i] > best) {
                    best = xv[i];
                    best_i = i;
                    first = false;
                  }
                }
            long long o = yd.idx(b, c, oz, oy, ox);
            yv[o] = best;
            (*route)[o] = best_i;
          }
    }
  }

  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn, route](Node& out) {
      xn->ensure_grad();
      for (size_t o = 0; o < out.grad.size(); ++o)
        xn->grad[(*route)[o]] += out.grad[o];
    };
  }
  return Tensor(n);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_5d(a, "concat_channels");
  require_5d(b, "concat_channels");
  Dims5 ad = dims5(a.shape()), bd = dims5(b.shape());
  if (ad.b != bd.b || ad.d != bd.d || ad.h != bd.h || ad.w != bd.w)
    throw TensorError("concat_channels: non-channel dims differ: " +
                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto n = new_node({ad.b, ad.c + bd.c, ad.d, ad.h, ad.w}, {a.node(), b.node()});
  Dims5 yd = dims5(n->shape);
  long long sp = ad.spatial();
  for (int bb = 0; bb < ad.b; ++bb) {
    for (int c = 0; c < ad.c; ++c)
      std::copy_n(a.value().data() + (static_cast<long long>(bb) * ad.c + c) * sp,
                  sp, n->value.data() + (static_cast<long long>(bb) * yd.c + c) * sp);
    for (int c = 0; c < bd.c; ++c)
      std::copy_n(b.value().data() + (static_cast<long long>(bb) * bd.c + c) * sp,
                  sp,
                  n->value.data() +
                      (static_cast<long long>(bb) * yd.c + ad.c + c) * sp);
  }
  if (n->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    n->backward_fn = [an, bn, ad, bd, yd, sp](Node& out) {
      for (int bb = 0; bb < ad.b; ++bb) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (int c = 0; c < ad.c; ++c) {
            const double* src =
                out.grad.data() + (static_cast<long long>(bb) * yd.c + c) * sp;
            double* dst =
                an->grad.data() + (static_cast<long long>(bb) * ad.c + c) * sp;
            for (long long i = 0; i < sp; ++i) dst[i] += src[i];
          }
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int c = 0; c < bd.c; ++c) {
            const double* src =
                out.grad.data() +
                (static_cast<long long>(bb) * yd.c + ad.c + c) * sp;
            double* dst =
                bn->grad.data() + (static_cast<long long>(bb) * bd.c + c) * sp;
            for (long long i = 0; i < sp; ++i) dst[i] += src[i];
          }
        }
      }
    };
  }
  return Tensor(n);
}

Tensor central_diff(const Tensor& x, int spatial_axis) {
  require_5d(x, "central_diff");
  if (spatial_axis < 0 || spatial_axis > 2)
    throw TensorError("central_diff: spatial_axis must be 0, 1 or 2");
  Dims5 xd = dims5(x.shape());
  int len = spatial_axis == 0 ? xd.d : spatial_axis == 1 ? xd.h : xd.w;
  if (len < 2)
    throw TensorError("central_diff: axis length must be >= 2");

  auto n = new_node(x.shape(), {x.node()});
  // stride of one step along the chosen axis, and iteration over lines
  long long step = spatial_axis == 2 ? 1
                   : spatial_axis == 1 ? xd.w
                                       : static_cast<long long>(xd.h) * xd.w;
  long long lines = static_cast<long long>(x.numel()) / len;

  auto line_base = [xd, spatial_axis, step, len](long long line) {
    // decompose line index into the remaining 4 axes
    long long dims[4], strides[4];
    int a = 0;
    long long s[5] = {static_cast<long long>(xd.c) * xd.d * xd.h * xd.w,
                      static_cast<long long>(xd.d) * xd.h * xd.w,
                      static_cast<long long>(xd.h) * xd.w, xd.w, 1};
    long long d[5] = {xd.b, xd.c, xd.d, xd.h, xd.w};
    for (int i = 0; i < 5; ++i) {
      if (i == spatial_axis + 2) continue;
      dims[a] = d[i];
      strides[a] = s[i];
      ++a;
    }
    long long base = 0;
    for (int i = 3; i >= 0; --i) {
      base += (line % dims[i]) * strides[i];
      line /= dims[i];
    }
    (void)step;
    (void)len;
    return base;
  };

  const double* xv = x.value().data();
  double* yv = n->value.data();
#pragma omp parallel for schedule(static)
  for (long long line = 0; line < lines; ++line) {
    long long base = line_base(line);
    yv[base] = xv[base + step] - xv[base];
    for (int i = 1; i < len - 1; ++i)
      yv[base + i * step] =
          0.5 * (xv[base + (i + 1) * step] - xv[base + (i - 1) * step]);
    yv[base + (len - 1) * step] =
        xv[base + (len - 1) * step] - xv[base + (len - 2) * step];
  }

  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn, lines, len, step, line_base](Node& out) {
      xn->ensure_grad();
      const double* gy = out.grad.data();
      double* gx = xn->grad.data();
#pragma omp parallel for schedule(static)
      for (long long line = 0; line < lines; ++line) {
        long long base = line_base(line);
        // adjoint of the stencil, accumulated serially per line
        gx[base] -= gy[base];
        gx[base + step] += gy[base];
        for (int i = 1; i < len - 1; ++i) {
          gx[base + (i - 1) * step] -= 0.5 * gy[base + i * step];
          gx[base + (i + 1) * step] += 0.5 * gy[base + i * step];
        }
        gx[base + (len - 2) * step] -= gy[base + (len - 1) * step];
        gx[base + (len - 1) * step] += gy[base + (len - 1) * step];
      }
    };
  }
  return Tensor(n);
}

Tensor grad_l1(const Tensor& x) {
  return add(add(abs_(central_diff(x, 0)), abs_(central_diff(x, 1))),
             abs_(central_diff(x, 2)));
}

namespace {

template <bool IsSI>
Tensor masked_pool(const Tensor& x, const char* name) {
  require_5d(x, name);
  Dims5 xd = dims5(x.shape());
  if (xd.c != 1)
    throw TensorError(std::string(name) + ": channels must be 1");
  if (xd.d < 3 || xd.h < 3 || xd.w < 3)
    throw TensorError(std::string(name) + ": spatial dims must be >= 3");

  auto n = new_node(x.shape(), {x.node()});
  long long sp = xd.spatial();
  auto route = std::make_shared<std::vector<int64_t>>(n->numel());
  for (int b = 0; b < xd.b; ++b) {
    const double* in = x.value().data() + b * sp;
    double* out = n->value.data() + b * sp;
    int64_t* rt = route->data() + b * sp;
    morphseg::detail::si_is_kernel<double, IsSI>(in, out, xd.d, xd.h, xd.w, rt);
  }

  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn, route, xd, sp](Node& out) {
      xn->ensure_grad();
      for (int b = 0; b < xd.b; ++b)
        for (long long i = 0; i < sp; ++i)
          xn->grad[b * sp + (*route)[b * sp + i]] += out.grad[b * sp + i];
    };
  }
  return Tensor(n);
}

}  // namespace

Tensor masked_pool_si(const Tensor& x) {
  return masked_pool<true>(x, "masked_pool_si");
}

Tensor masked_pool_is(const Tensor& x) {
  return masked_pool<false>(x, "masked_pool_is");
}

}  // namespace morphseg::ad
