#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "mgaa/common.hpp"
#include "mgaa/tape.hpp"

namespace mgaa {
namespace ops {

// Primitive tensor ops on the tape. Parallel loops only split across outputs
// that are written by a single thread with a fixed accumulation order, so
// results do not depend on the thread count.

template <typename T>
int conv2d(Tape<T>& tp, int x, int w, int b, int pad_f, int pad_t) {
  const auto& xv = tp.val(x);
  const auto& wv = tp.val(w);
  const auto& bv = tp.val(b);
  const int B = xv.b(), Ci = xv.c(), F = xv.f(), Tt = xv.t();
  const int Co = wv.b(), KF = wv.f(), KT = wv.t();
  require(wv.c() == Ci, "conv2d: weight expects ", wv.c(), " input channels, got ", Ci);
  require(bv.c() == Co && bv.size() == size_t(Co), "conv2d: bad bias shape");
  const int OF = F + 2 * pad_f - KF + 1;
  const int OT = Tt + 2 * pad_t - KT + 1;
  require(OF > 0 && OT > 0, "conv2d: kernel does not fit input ", F, "x", Tt);

  Tensor<T> out(B, Co, OF, OT);
#pragma omp parallel for collapse(2) schedule(static)
  for (int bb = 0; bb < B; ++bb)
    for (int co = 0; co < Co; ++co) {
      T* op = &out(bb, co, 0, 0);
      const T bias = bv[size_t(co)];
      for (int i = 0; i < OF * OT; ++i) op[i] = bias;
      for (int ci = 0; ci < Ci; ++ci)
        for (int kf = 0; kf < KF; ++kf)
          for (int kt = 0; kt < KT; ++kt) {
            const T wgt = wv(co, ci, kf, kt);
            for (int of = 0; of < OF; ++of) {
              const int fi = of + kf - pad_f;
              if (fi < 0 || fi >= F) continue;
              const T* ip = &xv(bb, ci, fi, 0);
              T* orow = op + of * OT;
              const int t0 = std::max(0, pad_t - kt);
              const int t1 = std::min(OT, Tt + pad_t - kt);
              for (int ot = t0; ot < t1; ++ot)
                orow[ot] += wgt * ip[ot + kt - pad_t];
            }
          }
    }

  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv2 = t.val(x);
    const auto& wv2 = t.val(w);
    auto& gx = t.grad(x);
    auto& gw = t.grad(w);
    auto& gb = t.grad(b);
    const int B2 = xv2.b();
// input gradient: disjoint per sample
#pragma omp parallel for schedule(static)
    for (int bb = 0; bb < B2; ++bb)
      for (int co = 0; co < Co; ++co)
        for (int ci = 0; ci < Ci; ++ci)
          for (int kf = 0; kf < KF; ++kf)
            for (int kt = 0; kt < KT; ++kt) {
              const T wgt = wv2(co, ci, kf, kt);
              for (int of = 0; of < OF; ++of) {
                const int fi = of + kf - pad_f;
                if (fi < 0 || fi >= F) continue;
                const T* grow = &g(bb, co, of, 0);
                T* xrow = &gx(bb, ci, fi, 0);
                const int t0 = std::max(0, pad_t - kt);
                const int t1 = std::min(OT, Tt + pad_t - kt);
                for (int ot = t0; ot < t1; ++ot)
                  xrow[ot + kt - pad_t] += wgt * grow[ot];
              }
            }
// weight/bias gradients: disjoint per output channel
#pragma omp parallel for schedule(static)
    for (int co = 0; co < Co; ++co) {
      T bsum = T(0);
      for (int bb = 0; bb < B2; ++bb) {
        const T* gbase = &g(bb, co, 0, 0);
        for (int i = 0; i < OF * OT; ++i) bsum += gbase[i];
        for (int ci = 0; ci < Ci; ++ci)
          for (int kf = 0; kf < KF; ++kf)
            for (int kt = 0; kt < KT; ++kt) {
              T acc = T(0);
              for (int of = 0; of < OF; ++of) {
                const int fi = of + kf - pad_f;
                if (fi < 0 || fi >= F) continue;
                const T* grow = gbase + of * OT;
                const T* xrow = &xv2(bb, ci, fi, 0);
                const int t0 = std::max(0, pad_t - kt);
                const int t1 = std::min(OT, Tt + pad_t - kt);
                for (int ot = t0; ot < t1; ++ot)
                  acc += grow[ot] * xrow[ot + kt - pad_t];
              }
              gw(co, ci, kf, kt) += acc;
            }
      }
      gb[size_t(co)] += bsum;
    }
  });
}

// Depthwise conv: one (kf x kt) kernel per channel, weight tensor (C,1,KF,KT).
template <typename T>
int depthwise_conv2d(Tape<T>& tp, int x, int w, int b, int pad_f, int pad_t) {
  const auto& xv = tp.val(x);
  const auto& wv = tp.val(w);
  const auto& bv = tp.val(b);
  const int B = xv.b(), C = xv.c(), F = xv.f(), Tt = xv.t();
  const int KF = wv.f(), KT = wv.t();
  require(wv.b() == C && wv.c() == 1, "depthwise: weight must be (C,1,kf,kt)");
  require(bv.c() == C && bv.size() == size_t(C), "depthwise: bad bias shape");
  const int OF = F + 2 * pad_f - KF + 1;
  const int OT = Tt + 2 * pad_t - KT + 1;
  require(OF == F && OT == Tt, "depthwise: padding must preserve shape");

  Tensor<T> out(B, C, OF, OT);
#pragma omp parallel for collapse(2) schedule(static)
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c) {
      T* op = &out(bb, c, 0, 0);
      const T bias = bv[size_t(c)];
      for (int i = 0; i < OF * OT; ++i) op[i] = bias;
      for (int kf = 0; kf < KF; ++kf)
        for (int kt = 0; kt < KT; ++kt) {
          const T wgt = wv(c, 0, kf, kt);
          for (int of = 0; of < OF; ++of) {
            const int fi = of + kf - pad_f;
            if (fi < 0 || fi >= F) continue;
            const T* ip = &xv(bb, c, fi, 0);
            T* orow = op + of * OT;
            const int t0 = std::max(0, pad_t - kt);
            const int t1 = std::min(OT, Tt + pad_t - kt);
            for (int ot = t0; ot < t1; ++ot) orow[ot] += wgt * ip[ot + kt - pad_t];
          }
        }
    }

  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv2 = t.val(x);
    const auto& wv2 = t.val(w);
    auto& gx = t.grad(x);
    auto& gw = t.grad(w);
    auto& gb = t.grad(b);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
      T bsum = T(0);
      for (int bb = 0; bb < B; ++bb) {
        const T* gbase = &g(bb, c, 0, 0);
        for (int i = 0; i < OF * OT; ++i) bsum += gbase[i];
        for (int kf = 0; kf < KF; ++kf)
          for (int kt = 0; kt < KT; ++kt) {
            const T wgt = wv2(c, 0, kf, kt);
            T acc = T(0);
            for (int of = 0; of < OF; ++of) {
              const int fi = of + kf - pad_f;
              if (fi < 0 || fi >= F) continue;
              const T* grow = gbase + of * OT;
              const T* xrow = &xv2(bb, c, fi, 0);
              T* gxrow = &gx(bb, c, fi, 0);
              const int t0 = std::max(0, pad_t - kt);
              const int t1 = std::min(OT, Tt + pad_t - kt);
              for (int ot = t0; ot < t1; ++ot) {
                acc += grow[ot] * xrow[ot + kt - pad_t];
                gxrow[ot + kt - pad_t] += wgt * grow[ot];
              }
            }
            gw(c, 0, kf, kt) += acc;
          }
      }
      gb[size_t(c)] += bsum;
    }
  });
}

// Fully connected layer on (B, D, 1, 1) activations; weight (O, D, 1, 1).
template <typename T>
int linear(Tape<T>& tp, int x, int w, int b) {
  const auto& xv = tp.val(x);
  const auto& wv = tp.val(w);
  const auto& bv = tp.val(b);
  const int B = xv.b(), D = xv.c();
  const int O = wv.b();
  require(xv.f() == 1 && xv.t() == 1, "linear: input must be (B,D,1,1)");
  require(wv.c() == D, "linear: weight expects ", wv.c(), " features, got ", D);
  require(bv.size() == size_t(O), "linear: bad bias shape");

  Tensor<T> out(B, O, 1, 1);
#pragma omp parallel for schedule(static)
  for (int bb = 0; bb < B; ++bb) {
    const T* xp = &xv(bb, 0, 0, 0);
    for (int o = 0; o < O; ++o) {
      const T* wp = &wv(o, 0, 0, 0);
      T acc = bv[size_t(o)];
      for (int d = 0; d < D; ++d) acc += wp[d] * xp[d];
      out(bb, o, 0, 0) = acc;
    }
  }

  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv2 = t.val(x);
    const auto& wv2 = t.val(w);
    auto& gx = t.grad(x);
    auto& gw = t.grad(w);
    auto& gb = t.grad(b);
#pragma omp parallel for schedule(static)
    for (int bb = 0; bb < B; ++bb) {
      T* gxp = &gx(bb, 0, 0, 0);
      for (int o = 0; o < O; ++o) {
        const T go = g(bb, o, 0, 0);
        const T* wp = &wv2(o, 0, 0, 0);
        for (int d = 0; d < D; ++d) gxp[d] += go * wp[d];
      }
    }
#pragma omp parallel for schedule(static)
    for (int o = 0; o < O; ++o) {
      T* gwp = &gw(o, 0, 0, 0);
      T bsum = T(0);
      for (int bb = 0; bb < B; ++bb) {
        const T go = g(bb, o, 0, 0);
        bsum += go;
        const T* xp = &xv2(bb, 0, 0, 0);
        for (int d = 0; d < D; ++d) gwp[d] += go * xp[d];
      }
      gb[size_t(o)] += bsum;
    }
  });
}

// Batch normalization over (B,F,T) per channel. In training mode batch
// statistics are used and the running stats (owned by the caller, outside
// the tape) are updated in place; in eval mode the running stats are used.
template <typename T>
int batch_norm(Tape<T>& tp, int x, int gamma, int beta, Tensor<T>* running_mean,
               Tensor<T>* running_var, bool training, double momentum = 0.1,
               double eps = 1e-5) {
  const auto& xv = tp.val(x);
  const int B = xv.b(), C = xv.c(), F = xv.f(), Tt = xv.t();
  require(tp.val(gamma).size() == size_t(C) && tp.val(beta).size() == size_t(C),
          "batch_norm: affine shape mismatch");
  require(running_mean && running_var, "batch_norm: missing running stats");
  const size_t n = size_t(B) * F * Tt;

  std::vector<T> mean(C), inv_std(C);
  if (training) {
    require(n > 1, "batch_norm: need more than one value per channel");
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int bb = 0; bb < B; ++bb) {
        const T* p = &xv(bb, c, 0, 0);
        for (size_t i = 0; i < size_t(F) * Tt; ++i) s += double(p[i]);
      }
      const double mu = s / double(n);
      double v = 0.0;
      for (int bb = 0; bb < B; ++bb) {
        const T* p = &xv(bb, c, 0, 0);
        for (size_t i = 0; i < size_t(F) * Tt; ++i) {
          const double d = double(p[i]) - mu;
          v += d * d;
        }
      }
      const double var = v / double(n);
      mean[c] = T(mu);
      inv_std[c] = T(1.0 / std::sqrt(var + eps));
      // running variance keeps the unbiased estimate
      (*running_mean)[size_t(c)] =
          T((1.0 - momentum) * double((*running_mean)[size_t(c)]) + momentum * mu);
      (*running_var)[size_t(c)] =
          T((1.0 - momentum) * double((*running_var)[size_t(c)]) +
            momentum * var * double(n) / double(n - 1));
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = (*running_mean)[size_t(c)];
      inv_std[c] = T(1.0 / std::sqrt(double((*running_var)[size_t(c)]) + eps));
    }
  }

  const auto& gv = tp.val(gamma);
  const auto& bv = tp.val(beta);
  Tensor<T> out(B, C, F, Tt);
#pragma omp parallel for collapse(2) schedule(static)
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c) {
      const T* p = &xv(bb, c, 0, 0);
      T* o = &out(bb, c, 0, 0);
      const T mu = mean[c], is = inv_std[c], ga = gv[size_t(c)], be = bv[size_t(c)];
      for (size_t i = 0; i < size_t(F) * Tt; ++i) o[i] = ga * (p[i] - mu) * is + be;
    }

  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv2 = t.val(x);
    const auto& gv2 = t.val(gamma);
    auto& gx = t.grad(x);
    auto& gg = t.grad(gamma);
    auto& gb = t.grad(beta);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
      const T mu = mean[c], is = inv_std[c], ga = gv2[size_t(c)];
      double sum_g = 0.0, sum_gx = 0.0;
      for (int bb = 0; bb < B; ++bb) {
        const T* gp = &g(bb, c, 0, 0);
        const T* xp = &xv2(bb, c, 0, 0);
        for (size_t i = 0; i < size_t(F) * Tt; ++i) {
          sum_g += double(gp[i]);
          sum_gx += double(gp[i]) * double((xp[i] - mu) * is);
        }
      }
      gg[size_t(c)] += T(sum_gx);
      gb[size_t(c)] += T(sum_g);
      if (training) {
        const double inv_n = 1.0 / double(n);
        for (int bb = 0; bb < B; ++bb) {
          const T* gp = &g(bb, c, 0, 0);
          const T* xp = &xv2(bb, c, 0, 0);
          T* gxp = &gx(bb, c, 0, 0);
          for (size_t i = 0; i < size_t(F) * Tt; ++i) {
            const double xhat = double((xp[i] - mu) * is);
            gxp[i] += T(double(ga * is) *
                        (double(gp[i]) - inv_n * sum_g - xhat * inv_n * sum_gx));
          }
        }
      } else {
        for (int bb = 0; bb < B; ++bb) {
          const T* gp = &g(bb, c, 0, 0);
          T* gxp = &gx(bb, c, 0, 0);
          for (size_t i = 0; i < size_t(F) * Tt; ++i) gxp[i] += ga * is * gp[i];
        }
      }
    }
  });
}

// Group normalization: statistics per (sample, group) over (C/g, F, T).
template <typename T>
int group_norm(Tape<T>& tp, int x, int gamma, int beta, int groups,
               double eps = 1e-5) {
  const auto& xv = tp.val(x);
  const int B = xv.b(), C = xv.c(), F = xv.f(), Tt = xv.t();
  require(groups >= 1 && C % groups == 0, "group_norm: ", groups,
          " groups do not divide ", C, " channels");
  require(tp.val(gamma).size() == size_t(C) && tp.val(beta).size() == size_t(C),
          "group_norm: affine shape mismatch");
  const int cpg = C / groups;
  const size_t m = size_t(cpg) * F * Tt;

  auto stats = std::make_shared<std::vector<T>>(size_t(B) * groups * 2);
  const auto& gv = tp.val(gamma);
  const auto& bv = tp.val(beta);
  Tensor<T> out(B, C, F, Tt);
  for (int bb = 0; bb < B; ++bb)
    for (int gr = 0; gr < groups; ++gr) {
      double s = 0.0;
      for (int c = gr * cpg; c < (gr + 1) * cpg; ++c) {
        const T* p = &xv(bb, c, 0, 0);
        for (size_t i = 0; i < size_t(F) * Tt; ++i) s += double(p[i]);
      }
      const double mu = s / double(m);
      double v = 0.0;
      for (int c = gr * cpg; c < (gr + 1) * cpg; ++c) {
        const T* p = &xv(bb, c, 0, 0);
        for (size_t i = 0; i < size_t(F) * Tt; ++i) {
          const double d = double(p[i]) - mu;
          v += d * d;
        }
      }
      const T is = T(1.0 / std::sqrt(v / double(m) + eps));
      (*stats)[size_t(bb) * groups * 2 + gr * 2] = T(mu);
      (*stats)[size_t(bb) * groups * 2 + gr * 2 + 1] = is;
      for (int c = gr * cpg; c < (gr + 1) * cpg; ++c) {
        const T* p = &xv(bb, c, 0, 0);
        T* o = &out(bb, c, 0, 0);
        const T ga = gv[size_t(c)], be = bv[size_t(c)];
        for (size_t i = 0; i < size_t(F) * Tt; ++i)
          o[i] = ga * (p[i] - T(mu)) * is + be;
      }
    }

  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv2 = t.val(x);
    const auto& gv2 = t.val(gamma);
    auto& gx = t.grad(x);
    auto& gg = t.grad(gamma);
    auto& gb = t.grad(beta);
    for (int bb = 0; bb < B; ++bb)
      for (int gr = 0; gr < groups; ++gr) {
        const T mu = (*stats)[size_t(bb) * groups * 2 + gr * 2];
        const T is = (*stats)[size_t(bb) * groups * 2 + gr * 2 + 1];
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int c = gr * cpg; c < (gr + 1) * cpg; ++c) {
          const T* gp = &g(bb, c, 0, 0);
          const T* xp = &xv2(bb, c, 0, 0);
          const T ga = gv2[size_t(c)];
          double sg = 0.0, sgx = 0.0;
          for (size_t i = 0; i < size_t(F) * Tt; ++i) {
            const double xhat = double((xp[i] - mu) * is);
            const double dxh = double(gp[i]) * double(ga);
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xhat;
            sg += double(gp[i]);
            sgx += double(gp[i]) * xhat;
          }
          gg[size_t(c)] += T(sgx);
          gb[size_t(c)] += T(sg);
        }
        const double inv_m = 1.0 / double(m);
        for (int c = gr * cpg; c < (gr + 1) * cpg; ++c) {
          const T* gp = &g(bb, c, 0, 0);
          const T* xp = &xv2(bb, c, 0, 0);
          T* gxp = &gx(bb, c, 0, 0);
          const T ga = gv2[size_t(c)];
          for (size_t i = 0; i < size_t(F) * Tt; ++i) {
            const double xhat = double((xp[i] - mu) * is);
            const double dxh = double(gp[i]) * double(ga);
            gxp[i] += T(double(is) *
                        (dxh - inv_m * sum_dxhat - xhat * inv_m * sum_dxhat_xhat));
          }
        }
      }
  });
}

template <typename T>
int relu(Tape<T>& tp, int x) {
  const auto& xv = tp.val(x);
  Tensor<T> out(xv.b(), xv.c(), xv.f(), xv.t());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& y = t.val(self);
    auto& gx = t.grad(x);
    for (size_t i = 0; i < g.size(); ++i)
      if (y[i] > T(0)) gx[i] += g[i];
  });
}

template <typename T>
int sigmoid(Tape<T>& tp, int x) {
  const auto& xv = tp.val(x);
  Tensor<T> out(xv.b(), xv.c(), xv.f(), xv.t());
  for (size_t i = 0; i < xv.size(); ++i) {
    const double v = double(xv[i]);
    out[i] = T(v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                        : std::exp(v) / (1.0 + std::exp(v)));
  }
  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& y = t.val(self);
    auto& gx = t.grad(x);
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

// Softmax across the channel axis at every (b,f,t) location.
template <typename T>
int softmax_channels(Tape<T>& tp, int x) {
  const auto& xv = tp.val(x);
  const int B = xv.b(), C = xv.c(), F = xv.f(), Tt = xv.t();
  Tensor<T> out(B, C, F, Tt);
  for (int bb = 0; bb < B; ++bb)
    for (int f = 0; f < F; ++f)
      for (int t = 0; t < Tt; ++t) {
        double mx = -1e300;
        for (int c = 0; c < C; ++c) mx = std::max(mx, double(xv(bb, c, f, t)));
        double z = 0.0;
        for (int c = 0; c < C; ++c) z += std::exp(double(xv(bb, c, f, t)) - mx);
        for (int c = 0; c < C; ++c)
          out(bb, c, f, t) = T(std::exp(double(xv(bb, c, f, t)) - mx) / z);
      }
  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& y = t.val(self);
    auto& gx = t.grad(x);
    for (int bb = 0; bb < B; ++bb)
      for (int f = 0; f < F; ++f)
        for (int tt = 0; tt < Tt; ++tt) {
          double dot = 0.0;
          for (int c = 0; c < C; ++c)
            dot += double(g(bb, c, f, tt)) * double(y(bb, c, f, tt));
          for (int c = 0; c < C; ++c)
            gx(bb, c, f, tt) += T(double(y(bb, c, f, tt)) *
                                  (double(g(bb, c, f, tt)) - dot));
        }
  });
}

// 2x2 max pooling with stride 2, floor semantics (a trailing odd row/column
// is dropped). Ties resolve to the first element in scan order.
template <typename T>
int maxpool2x2(Tape<T>& tp, int x) {
  const auto& xv = tp.val(x);
  const int B = xv.b(), C = xv.c(), F = xv.f(), Tt = xv.t();
  require(F >= 2 && Tt >= 2, "maxpool2x2: spatial dims must be >= 2, got ", F, "x", Tt);
  const int OF = F / 2, OT = Tt / 2;
  Tensor<T> out(B, C, OF, OT);
  auto arg = std::make_shared<std::vector<uint8_t>>(out.size());
#pragma omp parallel for collapse(2) schedule(static)
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c)
      for (int of = 0; of < OF; ++of)
        for (int ot = 0; ot < OT; ++ot) {
          T best = xv(bb, c, 2 * of, 2 * ot);
          uint8_t which = 0;
          for (uint8_t k = 1; k < 4; ++k) {
            const T v = xv(bb, c, 2 * of + (k >> 1), 2 * ot + (k & 1));
            if (v > best) {
              best = v;
              which = k;
            }
          }
          out(bb, c, of, ot) = best;
          (*arg)[out.index(bb, c, of, ot)] = which;
        }
  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (int bb = 0; bb < B; ++bb)
      for (int c = 0; c < C; ++c)
        for (int of = 0; of < OF; ++of)
          for (int ot = 0; ot < OT; ++ot) {
            const uint8_t k = (*arg)[g.index(bb, c, of, ot)];
            gx(bb, c, 2 * of + (k >> 1), 2 * ot + (k & 1)) += g(bb, c, of, ot);
          }
  });
}

namespace detail {

// Shared mean-pool implementation; axis: 0 = freq, 1 = time, 2 = both.
template <typename T>
int mean_pool(Tape<T>& tp, int x, int axis) {
  const auto& xv = tp.val(x);
  const int B = xv.b(), C = xv.c(), F = xv.f(), Tt = xv.t();
  const int OF = (axis == 1) ? F : 1;
  const int OT = (axis == 0) ? Tt : 1;
  const double inv = 1.0 / (double(axis == 1 ? 1 : F) * double(axis == 0 ? 1 : Tt));
  Tensor<T> out(B, C, OF, OT);
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c)
      for (int f = 0; f < F; ++f)
        for (int t = 0; t < Tt; ++t)
          out(bb, c, axis == 1 ? f : 0, axis == 0 ? t : 0) += T(double(xv(bb, c, f, t)) * inv);
  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (int bb = 0; bb < B; ++bb)
      for (int c = 0; c < C; ++c)
        for (int f = 0; f < F; ++f)
          for (int tt = 0; tt < Tt; ++tt)
            gx(bb, c, f, tt) += T(double(g(bb, c, axis == 1 ? f : 0, axis == 0 ? tt : 0)) * inv);
  });
}

}  // namespace detail

// Adaptive average pooling collapsing one or both spatial axes.
template <typename T>
int avgpool_freq(Tape<T>& tp, int x) { return detail::mean_pool(tp, x, 0); }
template <typename T>
int avgpool_time(Tape<T>& tp, int x) { return detail::mean_pool(tp, x, 1); }
template <typename T>
int global_avgpool(Tape<T>& tp, int x) { return detail::mean_pool(tp, x, 2); }

// Elementwise product with broadcasting on b's singleton axes.
template <typename T>
int mul(Tape<T>& tp, int a, int b) {
  const auto& av = tp.val(a);
  const auto& bv = tp.val(b);
  for (int i = 0; i < 4; ++i)
    require(bv.dims()[i] == av.dims()[i] || bv.dims()[i] == 1,
            "mul: shape mismatch on axis ", i);
  const int B = av.b(), C = av.c(), F = av.f(), Tt = av.t();
  const auto bidx = [&](int bb, int c, int f, int t) {
    return bv.index(bv.b() == 1 ? 0 : bb, bv.c() == 1 ? 0 : c, bv.f() == 1 ? 0 : f,
                    bv.t() == 1 ? 0 : t);
  };
  Tensor<T> out(B, C, F, Tt);
#pragma omp parallel for schedule(static)
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c)
      for (int f = 0; f < F; ++f) {
        const T* ap = &av(bb, c, f, 0);
        T* op = &out(bb, c, f, 0);
        for (int t = 0; t < Tt; ++t) op[t] = ap[t] * bv[bidx(bb, c, f, t)];
      }
  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& av2 = t.val(a);
    const auto& bv2 = t.val(b);
    auto& ga = t.grad(a);
    auto& gb = t.grad(b);
    for (int bb = 0; bb < B; ++bb)
      for (int c = 0; c < C; ++c)
        for (int f = 0; f < F; ++f)
          for (int tt = 0; tt < Tt; ++tt) {
            const size_t bi = bidx(bb, c, f, tt);
            ga(bb, c, f, tt) += g(bb, c, f, tt) * bv2[bi];
            gb[bi] += g(bb, c, f, tt) * av2(bb, c, f, tt);
          }
  });
}

// Convex (or fixed) combination of branch outputs: out = sum_i w[b,i] * A_i.
// Weights come in as (B, N, 1, 1).
template <typename T>
int combine(Tape<T>& tp, const std::vector<int>& branches, int w) {
  require(!branches.empty(), "combine: no branches");
  const auto& wv = tp.val(w);
  const int N = int(branches.size());
  require(wv.c() == N && wv.f() == 1 && wv.t() == 1, "combine: weight shape must be (B,",
          N, ",1,1)");
  const auto& a0 = tp.val(branches[0]);
  const int B = a0.b(), C = a0.c(), F = a0.f(), Tt = a0.t();
  for (int id : branches)
    require(tp.val(id).same_shape(a0), "combine: branch shape mismatch");
  require(wv.b() == B, "combine: weight batch mismatch");

  Tensor<T> out(B, C, F, Tt);
  for (int i = 0; i < N; ++i) {
    const auto& ai = tp.val(branches[i]);
    for (int bb = 0; bb < B; ++bb) {
      const T wi = wv(bb, i, 0, 0);
      const T* ap = &ai(bb, 0, 0, 0);
      T* op = &out(bb, 0, 0, 0);
      for (size_t k = 0; k < size_t(C) * F * Tt; ++k) op[k] += wi * ap[k];
    }
  }
  auto branches_copy = branches;
  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& wv2 = t.val(w);
    auto& gw = t.grad(w);
    for (int i = 0; i < N; ++i) {
      const auto& ai = t.val(branches_copy[i]);
      auto& gai = t.grad(branches_copy[i]);
      for (int bb = 0; bb < B; ++bb) {
        const T wi = wv2(bb, i, 0, 0);
        const T* gp = &g(bb, 0, 0, 0);
        const T* ap = &ai(bb, 0, 0, 0);
        T* gap = &gai(bb, 0, 0, 0);
        double acc = 0.0;
        for (size_t k = 0; k < size_t(C) * F * Tt; ++k) {
          gap[k] += wi * gp[k];
          acc += double(gp[k]) * double(ap[k]);
        }
        gw(bb, i, 0, 0) += T(acc);
      }
    }
  });
}

// Inverted dropout. Training mode scales kept activations by 1/(1-p); eval
// mode is the identity (and so is its Jacobian).
template <typename T>
int dropout(Tape<T>& tp, int x, double p, bool training, Rng* rng) {
  const auto& xv = tp.val(x);
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1), got ", p);
  if (!training || p == 0.0) {
    Tensor<T> out = xv;
    return tp.push(std::move(out), [=](Tape<T>& t, int self) {
      const auto& g = t.grad(self);
      auto& gx = t.grad(x);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  require(rng != nullptr, "dropout: training mode needs an RNG");
  auto mask = std::make_shared<std::vector<T>>(xv.size());
  const T keep_scale = T(1.0 / (1.0 - p));
  Tensor<T> out(xv.b(), xv.c(), xv.f(), xv.t());
  for (size_t i = 0; i < xv.size(); ++i) {
    const T m = (rng->uniform() >= p) ? keep_scale : T(0);
    (*mask)[i] = m;
    out[i] = xv[i] * m;
  }
  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

// (B,C,F,T) -> (B,C*F*T,1,1); same memory order, so just a relabel.
template <typename T>
int flatten(Tape<T>& tp, int x) {
  const auto& xv = tp.val(x);
  const int B = xv.b();
  const int D = xv.c() * xv.f() * xv.t();
  Tensor<T> out(B, D, 1, 1);
  std::copy(xv.data(), xv.data() + xv.size(), out.data());
  return tp.push(std::move(out), [=](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

// Mean cross-entropy over the batch from raw logits, via stable log-softmax.
template <typename T>
int cross_entropy_mean(Tape<T>& tp, int logits, std::vector<int> labels) {
  const auto& lv = tp.val(logits);
  const int B = lv.b(), K = lv.c();
  require(lv.f() == 1 && lv.t() == 1, "loss: logits must be (B,K,1,1)");
  require(int(labels.size()) == B, "loss: got ", labels.size(), " labels for batch ", B);
  for (int y : labels) require(y >= 0 && y < K, "loss: label ", y, " out of range");
  require(lv.all_finite(), "loss: non-finite logits");

  double total = 0.0;
  for (int bb = 0; bb < B; ++bb) {
    double mx = -1e300;
    for (int k = 0; k < K; ++k) mx = std::max(mx, double(lv(bb, k, 0, 0)));
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(double(lv(bb, k, 0, 0)) - mx);
    total += mx + std::log(z) - double(lv(bb, labels[size_t(bb)], 0, 0));
  }
  Tensor<T> out = Tensor<T>::scalar(T(total / B));
  return tp.push(std::move(out), [=, labels = std::move(labels)](Tape<T>& t, int self) {
    const T gscale = t.grad(self)[0];
    const auto& lv2 = t.val(logits);
    auto& gl = t.grad(logits);
    for (int bb = 0; bb < B; ++bb) {
      double mx = -1e300;
      for (int k = 0; k < K; ++k) mx = std::max(mx, double(lv2(bb, k, 0, 0)));
      double z = 0.0;
      for (int k = 0; k < K; ++k) z += std::exp(double(lv2(bb, k, 0, 0)) - mx);
      for (int k = 0; k < K; ++k) {
        const double p = std::exp(double(lv2(bb, k, 0, 0)) - mx) / z;
        const double onehot = (k == labels[size_t(bb)]) ? 1.0 : 0.0;
        gl(bb, k, 0, 0) += T(double(gscale) * (p - onehot) / B);
      }
    }
  });
}

// Stable log-sum-exp softmax probabilities, eval-side helper (not taped).
template <typename T>
inline std::vector<double> softmax_row(const Tensor<T>& logits, int row) {
  const int K = logits.c();
  double mx = -1e300;
  for (int k = 0; k < K; ++k) mx = std::max(mx, double(logits(row, k, 0, 0)));
  double z = 0.0;
  std::vector<double> p(K);
  for (int k = 0; k < K; ++k) {
    p[k] = std::exp(double(logits(row, k, 0, 0)) - mx);
    z += p[k];
  }
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace ops
}  // namespace mgaa
