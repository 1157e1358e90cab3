#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "ecgseg/tensor.hpp"

namespace ecgseg::nn {

// He-style initialization: normal(0, sqrt(2 / fan_in)).
template <typename T>
Tensor<T> he_init(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
  if (fan_in < 1) throw ShapeError("he_init: fan_in must be positive");
  auto t = Tensor<T>::zeros(std::move(shape), true);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : t.value()) v = static_cast<T>(dist(rng));
  return t;
}

// Cosine annealing from lr0 at step 0 down to 0 at total_steps.
inline double cosine_lr(long step, long total_steps, double lr0) {
  if (total_steps < 1) return lr0;
  step = std::clamp(step, 0L, total_steps);
  const double pi = 3.14159265358979323846;
  double lr = 0.5 * lr0 * (1.0 + std::cos(pi * static_cast<double>(step) / total_steps));
  return std::max(lr, 0.0);
}

// Bias-corrected Adam over a fixed parameter list. step() consumes the
// gradients currently held by the parameters.
template <typename T>
class Adam {
 public:
  explicit Adam(std::vector<Tensor<T>> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].size(), 0.0);
      v_[i].assign(params_[i].size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& value = params_[i].value();
      auto& grad = params_[i].grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < value.size(); ++j) {
        const double g = grad[j];
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        value[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  long step_count() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  double beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace ecgseg::nn
