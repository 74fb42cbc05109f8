#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "mgaa/audio.hpp"
#include "mgaa/fft.hpp"
#include "mgaa/tensor.hpp"

namespace mgaa {

enum class Transform { STFT, CQT };
enum class FreqScale { Linear, LogScale, Mel };

struct SpectralConfig {
  Transform transform = Transform::STFT;
  int hop = 512;
  int window_length = 1024;  // STFT only; periodic Hann
  FreqScale freq_scale = FreqScale::Linear;
  int n_filters = 20;
  double epsilon = 1e-10;

  // CQT geometry: C1 up to the Nyquist-limited octave range.
  double cqt_f_min = 32.7;
  int cqt_bins_per_octave = 12;

  int n_bins() const {
    if (transform == Transform::STFT) return window_length / 2 + 1;
    const double octaves =
        std::log2(double(AudioSegment::kSampleRate) / 2.0 / cqt_f_min);
    return int(std::floor(cqt_bins_per_octave * octaves)) + 1;
  }

  int n_frames() const { return AudioSegment::kLength / hop + 1; }

  void validate() const {
    require(hop == 512, "hop must be 512, got ", hop);
    require(epsilon > 0, "epsilon must be positive");
    require(n_filters >= 1, "need at least one filter");
    if (transform == Transform::STFT) {
      require(window_length > 0 && (window_length & (window_length - 1)) == 0,
              "STFT window length must be a power of two, got ", window_length);
    }
  }
};

// Center frequency of each spectrogram row, in Hz.
inline std::vector<double> bin_frequencies(const SpectralConfig& cfg) {
  std::vector<double> f(cfg.n_bins());
  if (cfg.transform == Transform::STFT) {
    const double df = double(AudioSegment::kSampleRate) / cfg.window_length;
    for (int k = 0; k < int(f.size()); ++k) f[k] = k * df;
  } else {
    for (int k = 0; k < int(f.size()); ++k)
      f[k] = cfg.cqt_f_min * std::pow(2.0, double(k) / cfg.cqt_bins_per_octave);
  }
  return f;
}

namespace spec_detail {

// Reflect-padded sample access, librosa-style (edge sample not repeated).
inline double sample_at(const std::vector<float>& x, long i) {
  const long n = long(x.size());
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return double(x[size_t(i)]);
}

}  // namespace spec_detail

// Reusable spectral analysis plan. Building one precomputes the STFT window
// or the full set of CQT kernels; compute() is const and reentrant.
class SpectrogramPlan {
 public:
  explicit SpectrogramPlan(const SpectralConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.transform == Transform::STFT) {
      const int n = cfg_.window_length;
      window_.resize(n);
      static constexpr double kTwoPi = 6.283185307179586476925286766559;
      for (int i = 0; i < n; ++i) window_[i] = 0.5 - 0.5 * std::cos(kTwoPi * i / n);
    } else {
      build_cqt_kernels();
    }
  }

  const SpectralConfig& config() const { return cfg_; }

  // Power spectrogram, n_bins x T with T = S/hop + 1 center-aligned frames.
  Mat compute(const AudioSegment& seg) const {
    require(int(seg.samples.size()) == AudioSegment::kLength,
            "segment must have ", AudioSegment::kLength, " samples, got ",
            seg.samples.size());
    require(seg.all_finite(), "segment contains non-finite samples");
    const int T = cfg_.n_frames();
    Mat out(cfg_.n_bins(), T);
    if (cfg_.transform == Transform::STFT) {
      std::vector<std::complex<double>> buf(cfg_.window_length);
      for (int n = 0; n < T; ++n) {
        const long center = long(n) * cfg_.hop;
        const long start = center - cfg_.window_length / 2;
        for (int i = 0; i < cfg_.window_length; ++i)
          buf[i] = {spec_detail::sample_at(seg.samples, start + i) * window_[i], 0.0};
        fft_inplace(buf);
        for (int k = 0; k < out.rows; ++k) out(k, n) = std::norm(buf[k]);
      }
    } else {
      for (int k = 0; k < out.rows; ++k) {
        const auto& ker = kernels_[k];
        const long half = long(ker.size()) / 2;
        for (int n = 0; n < T; ++n) {
          const long start = long(n) * cfg_.hop - half;
          std::complex<double> acc(0.0, 0.0);
          for (size_t m = 0; m < ker.size(); ++m)
            acc += spec_detail::sample_at(seg.samples, start + long(m)) * ker[m];
          out(k, n) = std::norm(acc);
        }
      }
    }
    return out;
  }

 private:
  void build_cqt_kernels() {
    const double q = 1.0 / (std::pow(2.0, 1.0 / cfg_.cqt_bins_per_octave) - 1.0);
    const auto freqs = bin_frequencies(cfg_);
    kernels_.resize(freqs.size());
    static constexpr double kTwoPi = 6.283185307179586476925286766559;
    for (size_t k = 0; k < freqs.size(); ++k) {
      const double fk = freqs[k];
      const int nk = int(std::ceil(q * AudioSegment::kSampleRate / fk));
      auto& ker = kernels_[k];
      ker.resize(nk);
      double wsum = 0.0;
      for (int m = 0; m < nk; ++m) {
        const double w = 0.5 - 0.5 * std::cos(kTwoPi * m / nk);
        const double ph = -kTwoPi * fk * (m - nk / 2) / AudioSegment::kSampleRate;
        ker[m] = w * std::complex<double>(std::cos(ph), std::sin(ph));
        wsum += w;
      }
      for (auto& c : ker) c /= wsum;  // unit response to a tone at f_k
    }
  }

  SpectralConfig cfg_;
  std::vector<double> window_;
  std::vector<std::vector<std::complex<double>>> kernels_;
};

// One-shot convenience wrapper; batch callers should hold a plan.
inline Mat frame_spectrogram(const AudioSegment& seg, const SpectralConfig& cfg) {
  return SpectrogramPlan(cfg).compute(seg);
}

}  // namespace mgaa
