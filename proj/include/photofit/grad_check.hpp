// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "photofit/layers.hpp"

namespace photofit {

struct ParameterGradError {
  std::string name;
  bool trainable = true;
  double max_abs_analytic = 0.0;
  double rel_error = 0.0;  // ||analytic - numeric||_inf / ||numeric||_inf
};

struct GradCheckReport {
  std::vector<ParameterGradError> parameters;
  double input_rel_error = 0.0;
  double tolerance = 1e-3;
  std::string worst;
  double worst_error = 0.0;
  bool passed() const { return worst_error < tolerance; }
};

struct GradCheckOptions {
  double tolerance = 1e-3;
  double step = 1e-6;
  Mode mode = Mode::kTrain;
  std::uint64_t seed = 7;
  double input_scale = 1.0;
  double parameter_jitter = 0.1;
  std::vector<std::string> frozen;  // parameter names to mark non-trainable
};

namespace detail {

inline double rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double num = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    num = std::max(num, std::abs(numeric[i]));
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
  }
  if (num < 1e-12) return diff < 1e-12 ? 0.0 : diff / 1e-12;
  return diff / num;
}

inline double objective(Layer<double>& layer, const BasicTensor<double>& x,
                        const BasicTensor<double>& proj, Mode mode) {
  return dot(layer.forward(x, mode), proj);
}

}  // namespace detail

/// Compares the 32-bit analytic gradients of a layer against central finite
/// differences of the same layer evaluated in 64-bit. The scalar objective is
/// a random projection of the layer output, so every output is exercised.
/// `make` is called with a float and with a double tag and must return a
/// std::unique_ptr to a Layer of that precision.
template <class Factory>
GradCheckReport grad_check(Factory&& make, const std::vector<int>& input_dims,
                           const GradCheckOptions& opt = {}) {
  std::unique_ptr<Layer<float>> f32 = make(float{});
  std::unique_ptr<Layer<double>> f64 = make(double{});
  Rng rng(opt.seed);
  f32->reset_parameters(rng);
  std::uniform_real_distribution<double> jitter(-opt.parameter_jitter, opt.parameter_jitter);
  auto p32 = f32->parameters();
  auto p64 = f64->parameters();
  auto b32 = f32->buffers();
  auto b64 = f64->buffers();
  for (std::size_t i = 0; i < p32.size(); ++i) {
    for (auto& v : p32[i]->value.values()) v = float(v + jitter(rng));
    p64[i]->value = p32[i]->value.template cast<double>();
    p64[i]->grad = BasicTensor<double>(p64[i]->value.dims());
    const bool frozen =
        std::find(opt.frozen.begin(), opt.frozen.end(), p32[i]->name) != opt.frozen.end();
    p32[i]->trainable = !frozen;
    p64[i]->trainable = !frozen;
    p32[i]->zero_grad();
  }
  for (std::size_t i = 0; i < b32.size(); ++i) *b64[i].tensor = b32[i].tensor->template cast<double>();

  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Tensor x32(input_dims);
  for (auto& v : x32.values()) v = float(opt.input_scale * unit(rng));
  BasicTensor<double> x64 = x32.template cast<double>();

  Tensor y32 = f32->forward(x32, opt.mode);
  Tensor proj32(y32.dims());
  for (auto& v : proj32.values()) v = float(unit(rng));
  BasicTensor<double> proj64 = proj32.template cast<double>();
  Tensor dx32 = f32->backward(proj32);

  GradCheckReport report;
  report.tolerance = opt.tolerance;
  auto note = [&](const std::string& name, double err) {
    if (report.worst.empty() || err > report.worst_error) {
      report.worst_error = err;
      report.worst = name;
    }
  };

  for (std::size_t i = 0; i < p64.size(); ++i) {
    ParameterGradError e;
    e.name = p32[i]->name;
    e.trainable = p32[i]->trainable;
    std::vector<double> analytic(p32[i]->grad.values().begin(), p32[i]->grad.values().end());
    for (double a : analytic) e.max_abs_analytic = std::max(e.max_abs_analytic, std::abs(a));
    if (e.trainable) {
      std::vector<double> numeric(analytic.size());
      auto& val = p64[i]->value;
      for (std::size_t j = 0; j < val.size(); ++j) {
        const double orig = val[j];
        const double h = opt.step * std::max(1.0, std::abs(orig));
        val[j] = orig + h;
        const double up = detail::objective(*f64, x64, proj64, opt.mode);
        val[j] = orig - h;
        const double down = detail::objective(*f64, x64, proj64, opt.mode);
        val[j] = orig;
        numeric[j] = (up - down) / (2.0 * h);
      }
      e.rel_error = detail::rel_error(analytic, numeric);
      note(e.name, e.rel_error);
    }
    report.parameters.push_back(e);
  }

  std::vector<double> analytic_dx(dx32.values().begin(), dx32.values().end());
  std::vector<double> numeric_dx(x64.size());
  for (std::size_t j = 0; j < x64.size(); ++j) {
    const double orig = x64[j];
    const double h = opt.step * std::max(1.0, std::abs(orig));
    x64[j] = orig + h;
    const double up = detail::objective(*f64, x64, proj64, opt.mode);
    x64[j] = orig - h;
    const double down = detail::objective(*f64, x64, proj64, opt.mode);
    x64[j] = orig;
    numeric_dx[j] = (up - down) / (2.0 * h);
  }
  report.input_rel_error = detail::rel_error(analytic_dx, numeric_dx);
  note("input", report.input_rel_error);
  return report;
}

enum class LossKind { kMse, kBce };

/// Same comparison for a loss's gradient w.r.t. its prediction argument.
GradCheckReport grad_check_loss(LossKind kind, const std::vector<int>& dims,
                                const GradCheckOptions& opt = {});

}  // namespace photofit
