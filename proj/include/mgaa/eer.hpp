#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "mgaa/common.hpp"

namespace mgaa {

// Labeled detection scores for one evaluation cell. Scores are oriented so
// that higher means more likely fake; labels are 0 = real, 1 = fake.
struct ScoreSet {
  std::vector<double> scores;
  std::vector<int> labels;
  std::string condition_tag;

  void validate() const {
    require(!scores.empty(), "empty score set", condition_tag.empty() ? "" : " ",
            condition_tag);
    require(scores.size() == labels.size(), "score/label length mismatch");
    bool has_real = false, has_fake = false;
    for (int y : labels) {
      require(y == 0 || y == 1, "bad label ", y);
      (y == 0 ? has_real : has_fake) = true;
    }
    require(has_real && has_fake, "EER needs both classes present",
            condition_tag.empty() ? "" : cat(" (", condition_tag, ")"));
  }
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Equal error rate: the operating point where the false acceptance rate
// (fakes scored below threshold) equals the false rejection rate (reals
// scored at or above it). The sweep walks all distinct scores; where the two
// step curves cross between points the rates are linearly interpolated and
// the reported threshold is the midpoint of the bracketing scores.
inline EerResult compute_eer(const ScoreSet& s) {
  s.validate();
  const size_t n = s.scores.size();
  size_t n_real = 0, n_fake = 0;
  for (int y : s.labels) (y == 0 ? n_real : n_fake)++;

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return s.scores[a] < s.scores[b];
  });

  // Threshold candidates are the distinct scores plus one below the minimum
  // (classify everything fake: FAR 0, FRR 1).
  // At threshold tau: FAR = |fake < tau| / n_fake, FRR = |real >= tau| / n_real.
  double prev_tau = s.scores[order[0]] - 1.0;
  double prev_far = 0.0, prev_frr = 1.0;
  size_t fake_below = 0, real_below = 0;

  size_t i = 0;
  while (i < n) {
    const double tau = s.scores[order[i]];
    // counts are for strictly-below tau, so they lag the walk
    const double far = double(fake_below) / double(n_fake);
    const double frr = double(n_real - real_below) / double(n_real);
    if (far >= frr) {
      const double d0 = prev_frr - prev_far;  // > 0
      const double d1 = frr - far;            // <= 0
      const double alpha = (d0 - d1) > 0 ? d0 / (d0 - d1) : 0.0;
      return {prev_far + alpha * (far - prev_far), 0.5 * (prev_tau + tau)};
    }
    prev_tau = tau;
    prev_far = far;
    prev_frr = frr;
    while (i < n && s.scores[order[i]] == tau) {
      (s.labels[order[i]] == 0 ? real_below : fake_below)++;
      ++i;
    }
  }
  // Everything classified real at tau above the maximum: FAR 1, FRR 0.
  const double tau = s.scores[order[n - 1]] + 1.0;
  const double far = 1.0, frr = 0.0;
  const double d0 = prev_frr - prev_far;
  const double d1 = frr - far;
  const double alpha = (d0 - d1) > 0 ? d0 / (d0 - d1) : 0.0;
  return {prev_far + alpha * (far - prev_far), 0.5 * (prev_tau + tau)};
}

}  // namespace mgaa
