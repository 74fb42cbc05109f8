#pragma once

#include <cmath>
#include <vector>

#include "mgaa/filterbank.hpp"
#include "mgaa/tensor.hpp"

namespace mgaa {

// Orthonormal DCT-II matrix, n_out x m. Rows are pairwise orthonormal, so the
// transform is well conditioned and invertible on its range.
inline Mat dct_matrix(int n_out, int m) {
  require(m >= n_out, "DCT needs at least as many inputs (", m,
          ") as output coefficients (", n_out, ")");
  Mat d(n_out, m);
  static constexpr double kPi = 3.14159265358979323846264338327950288;
  for (int j = 0; j < n_out; ++j) {
    const double s = (j == 0) ? std::sqrt(1.0 / m) : std::sqrt(2.0 / m);
    for (int i = 0; i < m; ++i) d(j, i) = s * std::cos(kPi * j * (i + 0.5) / m);
  }
  return d;
}

// Static cepstral coefficients: filterbank projection of the power
// spectrogram, log with epsilon inside, then DCT-II. Output is
// n_cepstra x T; coefficient index 0 (the DC term) is retained.
inline Mat cepstra(const Mat& power_spec, const Filterbank& fb, int n_cepstra = 20,
                   double epsilon = 1e-10) {
  const int m = fb.weights.rows;
  require(m >= n_cepstra, "filter count ", m, " is smaller than requested ",
          n_cepstra, " cepstra");
  require(fb.weights.cols == power_spec.rows, "filterbank has ", fb.weights.cols,
          " bins but spectrogram has ", power_spec.rows);
  const int T = power_spec.cols;
  const Mat dct = dct_matrix(n_cepstra, m);

  Mat out(n_cepstra, T);
  std::vector<double> log_e(m);
  for (int n = 0; n < T; ++n) {
    for (int i = 0; i < m; ++i) {
      double e = 0.0;
      for (int k = 0; k < power_spec.rows; ++k)
        e += fb.weights(i, k) * power_spec(k, n);
      log_e[i] = std::log(e + epsilon);
    }
    for (int j = 0; j < n_cepstra; ++j) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) acc += dct(j, i) * log_e[i];
      out(j, n) = acc;
    }
  }
  return out;
}

// First- and second-order regression deltas with window R. Edge frames use
// replicate padding; the second order applies the same operator to the first.
inline std::pair<Mat, Mat> deltas(const Mat& x, int r = 4) {
  require(r >= 1, "delta window must be >= 1");
  require(x.cols > 2 * r, "need more than ", 2 * r, " frames for deltas, got ",
          x.cols);
  double denom = 0.0;
  for (int k = 1; k <= r; ++k) denom += double(k) * k;
  denom *= 2.0;

  auto apply = [&](const Mat& in) {
    Mat out(in.rows, in.cols);
    auto at = [&](int j, int n) {
      n = std::max(0, std::min(in.cols - 1, n));
      return in(j, n);
    };
    for (int j = 0; j < in.rows; ++j)
      for (int n = 0; n < in.cols; ++n) {
        double acc = 0.0;
        for (int k = 1; k <= r; ++k) acc += k * (at(j, n + k) - at(j, n - k));
        out(j, n) = acc / denom;
      }
    return out;
  };

  Mat d1 = apply(x);
  Mat d2 = apply(d1);
  return {std::move(d1), std::move(d2)};
}

}  // namespace mgaa
