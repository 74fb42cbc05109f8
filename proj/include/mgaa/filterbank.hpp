#pragma once

#include <cmath>
#include <vector>

#include "mgaa/spectrogram.hpp"
#include "mgaa/tensor.hpp"

namespace mgaa {

// Triangular filterbank, one row per filter, evaluated at the spectrogram bin
// frequencies. Rows are ordered by ascending center frequency.
struct Filterbank {
  Mat weights;                       // n_filters x n_bins, non-negative
  std::vector<double> center_freqs;  // Hz

  void validate() const {
    for (int i = 0; i < weights.rows; ++i) {
      bool any = false;
      for (int j = 0; j < weights.cols && !any; ++j) any = weights(i, j) > 0.0;
      require(any, "filter ", i, " has no positive weight; too many filters for ",
              weights.cols, " bins?");
    }
    for (size_t i = 1; i < center_freqs.size(); ++i)
      require(center_freqs[i] > center_freqs[i - 1],
              "filter centers must be strictly ascending");
  }
};

namespace fb_detail {

inline double hz_to_mel(double f) { return 1127.0 * std::log(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::exp(m / 1127.0) - 1.0); }

// Triangles are evaluated on a warped axis: identity for linear, mel for mel,
// log2 for the geometric (constant-Q) scale. Edges are uniform on that axis.
inline Filterbank build(int n_filters, const std::vector<double>& bin_freqs,
                        double f_min, double f_max, double (*warp)(double),
                        double (*unwarp)(double)) {
  require(n_filters >= 1, "need at least one filter");
  require(f_max > f_min, "bad filter range [", f_min, ", ", f_max, "]");
  const double lo = warp(f_min), hi = warp(f_max);
  std::vector<double> edges(n_filters + 2);
  for (int i = 0; i < n_filters + 2; ++i)
    edges[i] = lo + (hi - lo) * i / double(n_filters + 1);

  Filterbank fb;
  fb.weights = Mat(n_filters, int(bin_freqs.size()));
  fb.center_freqs.resize(n_filters);
  for (int i = 0; i < n_filters; ++i) {
    const double e0 = edges[i], e1 = edges[i + 1], e2 = edges[i + 2];
    fb.center_freqs[i] = unwarp(e1);
    for (int k = 0; k < int(bin_freqs.size()); ++k) {
      if (bin_freqs[k] <= 0.0 && f_min > 0.0) continue;  // DC excluded on log scales
      const double w = warp(std::max(bin_freqs[k], 1e-12));
      double v = 0.0;
      if (w > e0 && w < e2)
        v = (w <= e1) ? (w - e0) / (e1 - e0) : (e2 - w) / (e2 - e1);
      fb.weights(i, k) = std::max(0.0, v);
    }
  }
  fb.validate();
  return fb;
}

inline double warp_id(double f) { return f; }
inline double warp_log2(double f) { return std::log2(f); }
inline double unwarp_log2(double x) { return std::pow(2.0, x); }

}  // namespace fb_detail

// Linear and mel banks span 0-8000 Hz; the log-scale bank is geometric over
// 32.7-8000 Hz (it pairs with the CQT whose lowest bin is C1).
inline Filterbank make_filterbank(FreqScale scale, int n_filters,
                                  const std::vector<double>& bin_freqs) {
  const double nyquist = AudioSegment::kSampleRate / 2.0;
  switch (scale) {
    case FreqScale::Linear:
      return fb_detail::build(n_filters, bin_freqs, 0.0, nyquist, fb_detail::warp_id,
                              fb_detail::warp_id);
    case FreqScale::Mel:
      return fb_detail::build(n_filters, bin_freqs, 0.0, nyquist, fb_detail::hz_to_mel,
                              fb_detail::mel_to_hz);
    case FreqScale::LogScale:
      return fb_detail::build(n_filters, bin_freqs, 32.7, nyquist, fb_detail::warp_log2,
                              fb_detail::unwarp_log2);
  }
  fail("unknown frequency scale");
}

}  // namespace mgaa
