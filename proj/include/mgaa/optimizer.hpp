#pragma once

#include <cmath>
#include <limits>

#include "mgaa/model.hpp"

namespace mgaa {

// Cosine annealing from lr_init down to lr_min over t_max steps. Endpoints
// are exact: lr(0) = lr_init, lr(t_max) = lr_min.
struct CosineSchedule {
  double lr_init = 1e-3;
  double lr_min = 1e-6;
  long t_max = 1;

  double at(long step) const {
    if (step >= t_max) return lr_min;
    static constexpr double kPi = 3.14159265358979323846264338327950288;
    const double c = std::cos(kPi * double(step) / double(t_max));
    return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + c);
  }
};

// Adam with decoupled weight decay: the decay term scales the parameter
// directly instead of entering the moment estimates.
template <typename T>
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double weight_decay = 1e-4,
        double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {}

  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }

  void step(ParamStore<T>& store, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (auto& e : store.entries) {
      if (e.grad.empty()) continue;
      if (e.adam_m.empty()) {
        const auto& d = e.value.dims();
        e.adam_m = Tensor<T>(d[0], d[1], d[2], d[3]);
        e.adam_v = Tensor<T>(d[0], d[1], d[2], d[3]);
      }
      for (size_t i = 0; i < e.value.size(); ++i) {
        const double g = double(e.grad[i]);
        const double m = beta1_ * double(e.adam_m[i]) + (1.0 - beta1_) * g;
        const double v = beta2_ * double(e.adam_v[i]) + (1.0 - beta2_) * g * g;
        e.adam_m[i] = T(m);
        e.adam_v[i] = T(v);
        const double update = (m / bc1) / (std::sqrt(v / bc2) + eps_);
        e.value[i] = T(double(e.value[i]) -
                       lr * update - lr * weight_decay_ * double(e.value[i]));
      }
    }
  }

 private:
  double beta1_, beta2_, weight_decay_, eps_;
  long t_ = 0;
};

// Patience-based stopping on a monitored value (lower is better).
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Returns true when training should stop. improved() tells whether the
  // last observation set a new best.
  bool observe(double value) {
    improved_ = value < best_;
    if (improved_) {
      best_ = value;
      bad_ = 0;
    } else {
      ++bad_;
    }
    return bad_ >= patience_;
  }

  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
  bool improved_ = false;
};

}  // namespace mgaa
