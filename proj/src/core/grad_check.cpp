// SPDX-License-Identifier: Apache-2.0
#include "photofit/grad_check.hpp"

namespace photofit {

GradCheckReport grad_check_loss(LossKind kind, const std::vector<int>& dims,
                                const GradCheckOptions& opt) {
  Rng rng(opt.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  Tensor pred(dims), target(dims);
  for (auto& v : pred.values()) v = float(2.0 * unit(rng));
  for (auto& v : target.values()) v = kind == LossKind::kBce ? (coin(rng) ? 1.0f : 0.0f) : float(unit(rng));

  auto eval32 = [&](const Tensor& p) {
    return kind == LossKind::kMse ? mse_loss(p, target) : bce_with_logits(p, target);
  };
  const BasicTensor<double> target64 = target.cast<double>();
  auto eval64 = [&](const BasicTensor<double>& p) {
    return kind == LossKind::kMse ? mse_loss(p, target64).loss : bce_with_logits(p, target64).loss;
  };

  const auto res = eval32(pred);
  BasicTensor<double> p64 = pred.cast<double>();
  std::vector<double> analytic(res.grad.values().begin(), res.grad.values().end());
  std::vector<double> numeric(p64.size());
  for (std::size_t j = 0; j < p64.size(); ++j) {
    const double orig = p64[j];
    const double h = opt.step * std::max(1.0, std::abs(orig));
    p64[j] = orig + h;
    const double up = eval64(p64);
    p64[j] = orig - h;
    const double down = eval64(p64);
    p64[j] = orig;
    numeric[j] = (up - down) / (2.0 * h);
  }
  GradCheckReport report;
  report.tolerance = opt.tolerance;
  report.input_rel_error = detail::rel_error(analytic, numeric);
  report.worst = kind == LossKind::kMse ? "mse" : "bce";
  report.worst_error = report.input_rel_error;
  return report;
}

}  // namespace photofit
