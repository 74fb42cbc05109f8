#pragma once

// Independent reference implementations used as test oracles. Everything in
// here is written as literal loops straight from the defining formulas and
// stays deliberately separate from the library implementation paths.

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "mgaa/tensor.hpp"

namespace oracle {

inline constexpr double kPi = 3.14159265358979323846264338327950288;

// Orthonormal DCT-II by definition, O(M^2) per frame.
inline std::vector<double> naive_dct(const std::vector<double>& in, int n_out) {
  const int m = int(in.size());
  std::vector<double> out(static_cast<size_t>(n_out));
  for (int j = 0; j < n_out; ++j) {
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += in[size_t(i)] * std::cos(kPi * j * (i + 0.5) / m);
    out[size_t(j)] = acc * (j == 0 ? std::sqrt(1.0 / m) : std::sqrt(2.0 / m));
  }
  return out;
}

// Direct O(N^2) DFT power spectrum of one windowed frame.
inline std::vector<double> naive_dft_power(const std::vector<double>& frame) {
  const int n = int(frame.size());
  std::vector<double> out(static_cast<size_t>(n / 2 + 1));
  for (int k = 0; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (int i = 0; i < n; ++i) {
      const double ang = -2.0 * kPi * k * i / n;
      re += frame[size_t(i)] * std::cos(ang);
      im += frame[size_t(i)] * std::sin(ang);
    }
    out[size_t(k)] = re * re + im * im;
  }
  return out;
}

// Regression delta by the defining formula with replicate padding.
inline mgaa::Mat naive_delta(const mgaa::Mat& x, int r) {
  mgaa::Mat out(x.rows, x.cols);
  double denom = 0.0;
  for (int k = 1; k <= r; ++k) denom += double(k) * k;
  denom *= 2.0;
  for (int j = 0; j < x.rows; ++j)
    for (int n = 0; n < x.cols; ++n) {
      double acc = 0.0;
      for (int k = 1; k <= r; ++k) {
        const int hi = std::min(x.cols - 1, n + k);
        const int lo = std::max(0, n - k);
        acc += k * (x(j, hi) - x(j, lo));
      }
      out(j, n) = acc / denom;
    }
  return out;
}

// Brute-force EER: counts FAR/FRR at every candidate threshold by direct
// loops, then interpolates at the sign change of (FRR - FAR).
inline double naive_eer(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> taus = scores;
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  taus.insert(taus.begin(), taus.front() - 1.0);
  taus.push_back(taus.back() + 1.0);

  auto far_frr = [&](double tau) {
    int fa = 0, nf = 0, fr = 0, nr = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (labels[i] == 1) {
        ++nf;
        if (scores[i] < tau) ++fa;  // fake accepted as real
      } else {
        ++nr;
        if (scores[i] >= tau) ++fr;  // real rejected as fake
      }
    }
    return std::pair<double, double>(double(fa) / nf, double(fr) / nr);
  };

  auto [pf, pr] = far_frr(taus[0]);
  for (size_t i = 1; i < taus.size(); ++i) {
    auto [f, r] = far_frr(taus[i]);
    if (f >= r) {
      const double d0 = pr - pf;
      const double d1 = r - f;
      const double alpha = (d0 - d1) > 0 ? d0 / (d0 - d1) : 0.0;
      return pf + alpha * (f - pf);
    }
    pf = f;
    pr = r;
  }
  return 1.0;
}

// ---- tensor op references (double precision, plain loops) ----

using DTensor = mgaa::Tensor<double>;

inline DTensor naive_conv2d(const DTensor& x, const DTensor& w, const DTensor& bias,
                            int pad_f, int pad_t) {
  const int B = x.b(), Ci = x.c(), F = x.f(), T = x.t();
  const int Co = w.b(), KF = w.f(), KT = w.t();
  DTensor out(B, Co, F + 2 * pad_f - KF + 1, T + 2 * pad_t - KT + 1);
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Co; ++co)
      for (int of = 0; of < out.f(); ++of)
        for (int ot = 0; ot < out.t(); ++ot) {
          double acc = bias[size_t(co)];
          for (int ci = 0; ci < Ci; ++ci)
            for (int kf = 0; kf < KF; ++kf)
              for (int kt = 0; kt < KT; ++kt) {
                const int fi = of + kf - pad_f;
                const int ti = ot + kt - pad_t;
                if (fi < 0 || fi >= F || ti < 0 || ti >= T) continue;
                acc += w(co, ci, kf, kt) * x(b, ci, fi, ti);
              }
          out(b, co, of, ot) = acc;
        }
  return out;
}

inline DTensor naive_depthwise(const DTensor& x, const DTensor& w, const DTensor& bias,
                               int pad_f, int pad_t) {
  const int B = x.b(), C = x.c(), F = x.f(), T = x.t();
  const int KF = w.f(), KT = w.t();
  DTensor out(B, C, F, T);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int of = 0; of < F; ++of)
        for (int ot = 0; ot < T; ++ot) {
          double acc = bias[size_t(c)];
          for (int kf = 0; kf < KF; ++kf)
            for (int kt = 0; kt < KT; ++kt) {
              const int fi = of + kf - pad_f;
              const int ti = ot + kt - pad_t;
              if (fi < 0 || fi >= F || ti < 0 || ti >= T) continue;
              acc += w(c, 0, kf, kt) * x(b, c, fi, ti);
            }
          out(b, c, of, ot) = acc;
        }
  return out;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Global time-frequency attention straight from the gating equation.
inline DTensor naive_gtfa(const DTensor& x, const DTensor& vf_w, const DTensor& vf_b,
                          const DTensor& vt_w, const DTensor& vt_b) {
  const int B = x.b(), C = x.c(), F = x.f(), T = x.t();
  DTensor pool_f(B, C, 1, T), pool_t(B, C, F, 1);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      for (int t = 0; t < T; ++t) {
        double s = 0.0;
        for (int f = 0; f < F; ++f) s += x(b, c, f, t);
        pool_f(b, c, 0, t) = s / F;
      }
      for (int f = 0; f < F; ++f) {
        double s = 0.0;
        for (int t = 0; t < T; ++t) s += x(b, c, f, t);
        pool_t(b, c, f, 0) = s / T;
      }
    }
  const DTensor mf = naive_conv2d(pool_f, vf_w, vf_b, 0, 0);
  const DTensor mt = naive_conv2d(pool_t, vt_w, vt_b, 0, 0);
  DTensor out(B, C, F, T);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int f = 0; f < F; ++f)
        for (int t = 0; t < T; ++t)
          out(b, c, f, t) =
              x(b, c, f, t) * sigmoid(mf(b, c, 0, t)) * sigmoid(mt(b, c, f, 0));
  return out;
}

// Local branch: depthwise then pointwise on each axis, sigmoid gates.
inline DTensor naive_ltfa(const DTensor& x, int k, const DTensor& dwf_w,
                          const DTensor& dwf_b, const DTensor& pwf_w, const DTensor& pwf_b,
                          const DTensor& dwt_w, const DTensor& dwt_b,
                          const DTensor& pwt_w, const DTensor& pwt_b) {
  const DTensor df = naive_depthwise(x, dwf_w, dwf_b, (k - 1) / 2, 0);
  const DTensor mf = naive_conv2d(df, pwf_w, pwf_b, 0, 0);
  const DTensor dt = naive_depthwise(x, dwt_w, dwt_b, 0, (k - 1) / 2);
  const DTensor mt = naive_conv2d(dt, pwt_w, pwt_b, 0, 0);
  DTensor out(x.b(), x.c(), x.f(), x.t());
  for (size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] * sigmoid(mf[i]) * sigmoid(mt[i]);
  return out;
}

// Fusion weights: pool -> reduce conv -> group norm -> relu -> gate conv ->
// softmax, all by definition.
inline std::vector<std::vector<double>> naive_afm(const DTensor& x, const DTensor& vr_w,
                                                  const DTensor& vr_b,
                                                  const DTensor& gn_gamma,
                                                  const DTensor& gn_beta, int groups,
                                                  const DTensor& vg_w, const DTensor& vg_b,
                                                  double eps = 1e-5) {
  const int B = x.b(), C = x.c(), F = x.f(), T = x.t();
  DTensor pooled(B, C, 1, 1);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int f = 0; f < F; ++f)
        for (int t = 0; t < T; ++t) s += x(b, c, f, t);
      pooled(b, c, 0, 0) = s / (double(F) * T);
    }
  DTensor red = naive_conv2d(pooled, vr_w, vr_b, 0, 0);
  const int R = red.c();
  const int cpg = R / groups;
  DTensor normed(B, R, 1, 1);
  for (int b = 0; b < B; ++b)
    for (int g = 0; g < groups; ++g) {
      double mu = 0.0;
      for (int c = g * cpg; c < (g + 1) * cpg; ++c) mu += red(b, c, 0, 0);
      mu /= cpg;
      double var = 0.0;
      for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
        const double d = red(b, c, 0, 0) - mu;
        var += d * d;
      }
      var /= cpg;
      for (int c = g * cpg; c < (g + 1) * cpg; ++c)
        normed(b, c, 0, 0) = gn_gamma[size_t(c)] * (red(b, c, 0, 0) - mu) /
                                 std::sqrt(var + eps) +
                             gn_beta[size_t(c)];
    }
  for (size_t i = 0; i < normed.size(); ++i) normed[i] = std::max(0.0, normed[i]);
  DTensor logits = naive_conv2d(normed, vg_w, vg_b, 0, 0);
  std::vector<std::vector<double>> weights(static_cast<size_t>(B));
  for (int b = 0; b < B; ++b) {
    const int N = logits.c();
    double mx = -1e300;
    for (int i = 0; i < N; ++i) mx = std::max(mx, logits(b, i, 0, 0));
    double z = 0.0;
    std::vector<double> w(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
      w[size_t(i)] = std::exp(logits(b, i, 0, 0) - mx);
      z += w[size_t(i)];
    }
    for (auto& v : w) v /= z;
    weights[size_t(b)] = std::move(w);
  }
  return weights;
}

// Mean silhouette coefficient by the textbook definition.
inline double naive_silhouette(const std::vector<std::vector<float>>& x,
                               const std::vector<int>& y) {
  const size_t n = x.size();
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double a_sum = 0.0, b_sum = 0.0;
    int a_n = 0, b_n = 0;
    for (size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double d = 0.0;
      for (size_t k = 0; k < x[i].size(); ++k) {
        const double t = double(x[i][k]) - double(x[j][k]);
        d += t * t;
      }
      d = std::sqrt(d);
      if (y[i] == y[j]) {
        a_sum += d;
        ++a_n;
      } else {
        b_sum += d;
        ++b_n;
      }
    }
    const double a = a_sum / a_n;
    const double b = b_sum / b_n;
    total += (b - a) / std::max(a, b);
  }
  return total / double(n);
}

}  // namespace oracle
