#pragma once

#include <cmath>
#include <vector>

#include "sequer/autodiff.hpp"

namespace sequer {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moments are allocated on the first step.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  [[nodiscard]] std::size_t step_count() const noexcept { return t_; }
  [[nodiscard]] const AdamConfig& config() const noexcept { return cfg_; }

  void step(std::vector<ad::Parameter<T>>& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(ad::Mat<T>::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(ad::Mat<T>::Zero(p.value.rows(), p.value.cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T lr = static_cast<T>(cfg_.learning_rate);
    const T inv_c1 = static_cast<T>(1.0 / c1), inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg_.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (p.grad.size() != p.value.size()) continue;
      m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr * (m_[i].array() * inv_c1) / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
  }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<ad::Mat<T>> m_, v_;
};

}  // namespace sequer
