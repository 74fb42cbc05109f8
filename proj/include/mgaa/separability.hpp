#pragma once

#include <cmath>
#include <vector>

#include "mgaa/common.hpp"

namespace mgaa {

struct SeparabilityReport {
  double silhouette = 0.0;   // in [-1, 1]
  double fisher_ratio = 0.0; // between-class / within-class variance, >= 0
};

// Deterministic stand-ins for a 2-D projection plot: mean silhouette over all
// samples (Euclidean distance) and the Fisher variance ratio. Quadratic in
// the sample count, so callers with large corpora should subsample.
inline SeparabilityReport separability(const std::vector<std::vector<float>>& x,
                                       const std::vector<int>& labels) {
  const size_t n = x.size();
  require(n >= 2 && labels.size() == n, "separability: need >= 2 labeled samples");
  size_t counts[2] = {0, 0};
  for (int y : labels) {
    require(y == 0 || y == 1, "separability: labels must be 0/1");
    counts[y]++;
  }
  require(counts[0] >= 2 && counts[1] >= 2,
          "separability: need at least two samples per class");
  const size_t d = x[0].size();
  for (const auto& v : x) require(v.size() == d, "separability: ragged embeddings");

  auto dist = [&](size_t i, size_t j) {
    double s = 0.0;
    for (size_t k = 0; k < d; ++k) {
      const double t = double(x[i][k]) - double(x[j][k]);
      s += t * t;
    }
    return std::sqrt(s);
  };

  double sil_sum = 0.0;
#pragma omp parallel for reduction(+ : sil_sum) schedule(static)
  for (size_t i = 0; i < n; ++i) {
    double sum_same = 0.0, sum_other = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      (labels[j] == labels[i] ? sum_same : sum_other) += dist(i, j);
    }
    const double a = sum_same / double(counts[size_t(labels[i])] - 1);
    const double b = sum_other / double(counts[size_t(1 - labels[i])]);
    const double m = std::max(a, b);
    sil_sum += m > 0.0 ? (b - a) / m : 0.0;
  }

  std::vector<double> mu0(d, 0.0), mu1(d, 0.0), mu(d, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t k = 0; k < d; ++k)
      (labels[i] == 0 ? mu0 : mu1)[k] += double(x[i][k]);
  for (size_t k = 0; k < d; ++k) {
    mu0[k] /= double(counts[0]);
    mu1[k] /= double(counts[1]);
    mu[k] = (mu0[k] * counts[0] + mu1[k] * counts[1]) / double(n);
  }
  double between = 0.0, within = 0.0;
  for (size_t k = 0; k < d; ++k) {
    const double d0 = mu0[k] - mu[k], d1 = mu1[k] - mu[k];
    between += counts[0] * d0 * d0 + counts[1] * d1 * d1;
  }
  for (size_t i = 0; i < n; ++i) {
    const auto& m = labels[i] == 0 ? mu0 : mu1;
    for (size_t k = 0; k < d; ++k) {
      const double t = double(x[i][k]) - m[k];
      within += t * t;
    }
  }

  SeparabilityReport r;
  r.silhouette = sil_sum / double(n);
  r.fisher_ratio = within > 0.0 ? between / within : 0.0;
  return r;
}

}  // namespace mgaa
