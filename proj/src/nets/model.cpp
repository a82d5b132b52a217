// SPDX-License-Identifier: Apache-2.0
#include "photofit/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>

namespace photofit {

std::vector<NamedBuffer<float>> Model::state() {
  std::vector<NamedBuffer<float>> out;
  for (auto* p : parameters()) out.push_back({p->name, &p->value});
  for (auto& b : buffers()) out.push_back(b);
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

std::vector<Tensor> snapshot(Model& m) {
  std::vector<Tensor> out;
  for (auto& s : m.state()) out.push_back(*s.tensor);
  return out;
}

void restore(Model& m, const std::vector<Tensor>& values) {
  auto st = m.state();
  if (st.size() != values.size()) throw ConfigError("restore: tensor count mismatch");
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (st[i].tensor->dims() != values[i].dims()) {
      throw ConfigError("restore: dims mismatch for " + st[i].name);
    }
    *st[i].tensor = values[i];
  }
}

Tensor gather_rows(const Tensor& src, std::span<const int> idx) {
  std::vector<int> dims = src.dims();
  const std::size_t row = src.size() / std::size_t(dims[0]);
  dims[0] = int(idx.size());
  Tensor out(dims);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::memcpy(out.data() + i * row, src.data() + std::size_t(idx[i]) * row, row * sizeof(float));
  }
  return out;
}

Tensor predict(Model& m, const Tensor& x, int batch_size) {
  const int n = x.dim(0);
  Tensor out;
  std::size_t row = 0;
  std::vector<int> idx;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    idx.resize(std::size_t(end - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor y = m.forward(gather_rows(x, idx), Mode::kInfer);
    if (out.empty()) {
      std::vector<int> dims = y.dims();
      row = y.size() / std::size_t(dims[0]);
      dims[0] = n;
      out = Tensor(dims);
    }
    std::memcpy(out.data() + std::size_t(start) * row, y.data(), y.size() * sizeof(float));
  }
  return out;
}

namespace {

double mse_in_batches(Model& m, const Tensor& x, const Tensor& y, int batch_size, int limit) {
  const int n = std::min(x.dim(0), limit);
  double total = 0.0;
  std::vector<int> idx;
  for (int start = 0; start < n; start += batch_size) {
    const int end = std::min(n, start + batch_size);
    idx.resize(std::size_t(end - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor pred = m.forward(gather_rows(x, idx), Mode::kInfer);
    Tensor target = gather_rows(y, idx);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = double(pred[i]) - target[i];
      total += d * d;
    }
  }
  const std::size_t per_row = y.size() / std::size_t(y.dim(0));
  return total / (double(n) * double(per_row));
}

}  // namespace

TrainHistory fit_mse(Model& m, const Tensor& x_train, const Tensor& y_train, const Tensor& x_val,
                     const Tensor& y_val, const TrainOptions& opt) {
  if (x_train.dim(0) != y_train.dim(0) || x_val.dim(0) != y_val.dim(0)) {
    throw ConfigError("fit_mse: input/target counts differ");
  }
  using Clock = std::chrono::steady_clock;
  TrainHistory h;
  Adam adam(m.parameters(), opt.adam);
  Rng rng(opt.seed);
  const int n = x_train.dim(0);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  auto record = [&](EpochLog log) {
    if (!std::isfinite(log.val_loss) || !std::isfinite(log.train_loss)) {
      throw TrainingDiverged(m.kind() + ": non-finite loss at epoch " + std::to_string(log.epoch) +
                             " (train " + std::to_string(log.train_loss) + ", val " +
                             std::to_string(log.val_loss) + ")");
    }
    h.epochs.push_back(log);
    if (opt.on_epoch) opt.on_epoch(log);
  };

  auto t0 = Clock::now();
  EpochLog init;
  init.train_loss = mse_in_batches(m, x_train, y_train, 64, 2048);
  init.val_loss = mse_in_batches(m, x_val, y_val, 64, x_val.dim(0));
  init.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  record(init);
  h.best_val = init.val_loss;
  std::vector<Tensor> best = snapshot(m);

  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    t0 = Clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += opt.batch_size) {
      const int end = std::min(n, start + opt.batch_size);
      if (end - start < 2) break;
      std::span<const int> idx(order.data() + start, std::size_t(end - start));
      adam.zero_grad();
      Tensor pred = m.forward(gather_rows(x_train, idx), Mode::kTrain);
      auto loss = mse_loss(pred, gather_rows(y_train, idx));
      if (!std::isfinite(loss.loss)) {
        throw TrainingDiverged(m.kind() + ": non-finite training loss at epoch " +
                               std::to_string(epoch) + ", batch starting " + std::to_string(start));
      }
      m.backward(loss.grad);
      try {
        adam.step();
      } catch (const NonFiniteGradient& e) {
        throw TrainingDiverged(m.kind() + ": " + e.what() + " at epoch " + std::to_string(epoch));
      }
      sum += loss.loss;
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = sum / std::max(1, batches);
    log.val_loss = mse_in_batches(m, x_val, y_val, 64, x_val.dim(0));
    log.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    record(log);
    if (log.val_loss < h.best_val) {
      h.best_val = log.val_loss;
      h.best_epoch = epoch;
      best = snapshot(m);
    }
  }
  restore(m, best);
  return h;
}

}  // namespace photofit
