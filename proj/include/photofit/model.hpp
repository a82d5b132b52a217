// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "photofit/adam.hpp"
#include "photofit/layers.hpp"

namespace photofit {

using NamedTensor = std::pair<std::string, Tensor>;

/// A trainable network with a fixed set of persistent tensors.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string kind() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Parameter<float>*> parameters() = 0;
  virtual std::vector<NamedBuffer<float>> buffers() = 0;
  /// Architecture description saved next to the weights ("meta.*" entries).
  virtual std::vector<NamedTensor> meta() const = 0;

  /// Parameters then buffers, in a stable order.
  std::vector<NamedBuffer<float>> state();
  std::size_t parameter_count();
};

std::vector<Tensor> snapshot(Model& m);
void restore(Model& m, const std::vector<Tensor>& values);

/// Raised when a training run produces a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochLog {
  int epoch = 0;  // 0 = before the first update
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainOptions {
  int epochs = 10;
  int batch_size = 32;
  AdamOptions adam;
  std::uint64_t seed = 1;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainHistory {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
};

/// Copies rows `idx` of the leading axis of `src`.
Tensor gather_rows(const Tensor& src, std::span<const int> idx);

/// Mean-squared-error training of `m` mapping x -> y with Adam and shuffled
/// minibatches; the model ends at its best-validation state.
TrainHistory fit_mse(Model& m, const Tensor& x_train, const Tensor& y_train, const Tensor& x_val,
                     const Tensor& y_val, const TrainOptions& opt);

/// Batched inference-mode forward pass over the leading axis.
Tensor predict(Model& m, const Tensor& x, int batch_size = 64);

}  // namespace photofit
