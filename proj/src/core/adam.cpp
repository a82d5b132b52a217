// SPDX-License-Identifier: Apache-2.0
#include "photofit/adam.hpp"

#include <cmath>

namespace photofit {

Adam::Adam(std::vector<Parameter<float>*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  for (auto* p : params_) {
    if (p->trainable && !p->grad.all_finite()) throw NonFiniteGradient(p->name);
  }
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(step_));
  const double c2 = 1.0 - std::pow(b2, double(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<float>& p = *params_[i];
    if (!p.trainable) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double g = p.grad[j];
      m[j] = float(b1 * m[j] + (1.0 - b1) * g);
      v[j] = float(b2 * v[j] + (1.0 - b2) * g * g);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p.value[j] = float(p.value[j] - options_.learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon));
    }
  }
}

}  // namespace photofit
