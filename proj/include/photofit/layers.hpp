// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "photofit/tensor.hpp"

namespace photofit {

using Rng = std::mt19937_64;

enum class Mode { kTrain, kInfer };

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> dims)
      : name(std::move(n)), value(dims), grad(dims) {}

  void zero_grad() { grad.fill(T{0}); }
};

/// Non-trainable state that must persist with a model (batchnorm statistics).
template <typename T>
struct NamedBuffer {
  std::string name;
  BasicTensor<T>* tensor;
};

/// A differentiable block. forward() caches whatever backward() needs;
/// backward() accumulates into parameter gradients and returns d(loss)/d(input).
template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  virtual BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) = 0;
  virtual BasicTensor<T> backward(const BasicTensor<T>& grad_out) = 0;
  virtual void collect_parameters(std::vector<Parameter<T>*>& /*out*/) {}
  virtual void collect_buffers(std::vector<NamedBuffer<T>>& /*out*/) {}
  virtual void reset_parameters(Rng& /*rng*/) {}

  const std::string& name() const { return name_; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    collect_parameters(out);
    return out;
  }
  std::vector<NamedBuffer<T>> buffers() {
    std::vector<NamedBuffer<T>> out;
    collect_buffers(out);
    return out;
  }

 private:
  std::string name_;
};

// Zero-padded "same" geometry: out = ceil(in / stride), padding split with the
// smaller half on the top/left.
struct ConvGeometry {
  int batch = 0;
  int in_h = 0, in_w = 0, channels = 0;
  int out_h = 0, out_w = 0;
  int kernel = 0, stride = 1;
  int pad_top = 0, pad_left = 0;
};

ConvGeometry same_geometry(int batch, int h, int w, int channels, int kernel, int stride);

/// Lays out every kernel window as one row: [N*out_h*out_w, k*k*C],
/// ordered (ky, kx, c) to match a [k,k,C,Cout] kernel tensor.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col);

/// Adjoint of im2col: scatters-and-adds rows back into an [N,H,W,C] buffer.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* x);

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
         bool bias = true);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void reset_parameters(Rng& rng) override;

  Parameter<T>& kernel() { return kernel_; }
  Parameter<T>& bias() { return bias_; }

 private:
  int in_channels_, out_channels_, k_, stride_;
  bool has_bias_;
  Parameter<T> kernel_;  // [k,k,Cin,Cout]
  Parameter<T> bias_;    // [Cout]
  ConvGeometry geom_;
  AlignedVector<T> col_;
};

/// Transposed convolution defined as the exact adjoint of Conv2d: a layer
/// with (in, out) channels shares the [k,k,out,in] kernel layout of a
/// Conv2d(out -> in) and its forward pass is that conv's data gradient.
template <typename T>
class TransposedConv2d final : public Layer<T> {
 public:
  TransposedConv2d(std::string name, int in_channels, int out_channels, int kernel,
                   int stride, bool bias = true);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void reset_parameters(Rng& rng) override;

  Parameter<T>& kernel() { return kernel_; }
  Parameter<T>& bias() { return bias_; }

 private:
  int in_channels_, out_channels_, k_, stride_;
  bool has_bias_;
  Parameter<T> kernel_;  // [k,k,Cout,Cin]
  Parameter<T> bias_;    // [Cout]
  ConvGeometry geom_;    // geometry of the underlying forward conv (output -> input)
  BasicTensor<T> input_;
};

/// Global average pooling [N,H,W,C] -> [N,C].
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  explicit GlobalAvgPool(std::string name) : Layer<T>(std::move(name)) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

 private:
  std::vector<int> in_dims_;
};

/// [N,In] -> [N,Out]; out = x * W + b.
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::string name, int in_features, int out_features);
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void reset_parameters(Rng& rng) override;

  Parameter<T>& weights() { return weights_; }
  Parameter<T>& bias() { return bias_; }
  const Parameter<T>& weights() const { return weights_; }
  const Parameter<T>& bias() const { return bias_; }

 private:
  int in_, out_;
  Parameter<T> weights_;  // [In,Out]
  Parameter<T> bias_;     // [Out]
  BasicTensor<T> input_;
};

enum class Activation { kRelu, kSigmoid, kTanh };

template <typename T>
class Pointwise final : public Layer<T> {
 public:
  Pointwise(std::string name, Activation kind) : Layer<T>(std::move(name)), kind_(kind) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

 private:
  Activation kind_;
  BasicTensor<T> cache_;  // input for relu, output for sigmoid/tanh
};

/// Per-channel batch normalisation over every leading axis (channel = last axis).
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNorm(std::string name, int channels);
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void collect_buffers(std::vector<NamedBuffer<T>>& out) override;

  Parameter<T>& scale() { return scale_; }
  Parameter<T>& shift() { return shift_; }
  BasicTensor<T>& running_mean() { return running_mean_; }
  BasicTensor<T>& running_var() { return running_var_; }

 private:
  int channels_;
  Parameter<T> scale_, shift_;
  BasicTensor<T> running_mean_, running_var_;
  Mode last_mode_ = Mode::kInfer;
  AlignedVector<T> xhat_;
  AlignedVector<T> inv_std_;
};

/// Reshapes everything after the leading batch axis.
template <typename T>
class Reshape final : public Layer<T> {
 public:
  Reshape(std::string name, std::vector<int> trailing)
      : Layer<T>(std::move(name)), trailing_(std::move(trailing)) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

 private:
  std::vector<int> trailing_;
  std::vector<int> in_dims_;
};

/// Reset/update-gate GRU over [N,T,D] -> hidden sequence [N,T,H], h_0 = 0.
///   z = sig(x Wz + h Uz + bz),  r = sig(x Wr + h Ur + br)
///   n = tanh(x Wn + (r*h) Un + bn),  h' = (1-z)*h + z*n
/// Gate blocks are packed in (z, r, n) order along the last axis.
template <typename T>
class Gru final : public Layer<T> {
 public:
  Gru(std::string name, int input_size, int hidden_size);
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void reset_parameters(Rng& rng) override;

  int hidden_size() const { return hidden_; }
  Parameter<T>& input_weights() { return w_x_; }   // [D,3H]
  Parameter<T>& hidden_weights() { return w_h_; }  // [H,3H]
  Parameter<T>& bias() { return b_; }              // [3H]

 private:
  int input_, hidden_;
  Parameter<T> w_x_, w_h_, b_;
  int batch_ = 0, steps_ = 0;
  BasicTensor<T> input_cache_;
  // per step caches, each [steps][N*H]
  std::vector<AlignedVector<T>> h_prev_, z_, r_, n_, rh_;
};

/// Attention pooling over time: M = tanh(H), a = softmax(M w), r = sum_t a_t h_t,
/// output tanh(r). The last attention weights are kept for reporting.
template <typename T>
class AttentionPool final : public Layer<T> {
 public:
  AttentionPool(std::string name, int hidden_size);
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
  void collect_parameters(std::vector<Parameter<T>*>& out) override;
  void reset_parameters(Rng& rng) override;

  Parameter<T>& weights() { return w_; }
  /// [N,T] weights from the most recent forward pass.
  const BasicTensor<T>& attention() const { return alpha_; }

 private:
  int hidden_;
  Parameter<T> w_;
  BasicTensor<T> input_, m_, alpha_, out_;
};

/// Selects h_T from [N,T,H] (the no-attention ablation).
template <typename T>
class LastStep final : public Layer<T> {
 public:
  explicit LastStep(std::string name) : Layer<T>(std::move(name)) {}
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;

 private:
  std::vector<int> in_dims_;
};

template <typename T>
class Sequential final : public Layer<T> {
 public:
  explicit Sequential(std::string name) : Layer<T>(std::move(name)) {}

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override {
    BasicTensor<T> h = x;
    for (auto& l : layers_) h = l->forward(h, mode);
    return h;
  }
  BasicTensor<T> backward(const BasicTensor<T>& grad_out) override {
    BasicTensor<T> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }
  void collect_parameters(std::vector<Parameter<T>*>& out) override {
    for (auto& l : layers_) l->collect_parameters(out);
  }
  void collect_buffers(std::vector<NamedBuffer<T>>& out) override {
    for (auto& l : layers_) l->collect_buffers(out);
  }
  void reset_parameters(Rng& rng) override {
    for (auto& l : layers_) l->reset_parameters(rng);
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

template <typename T>
struct BasicLossResult {
  double loss = 0.0;
  BasicTensor<T> grad;
};

/// Mean squared error over all elements.
template <typename T>
BasicLossResult<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

/// Mean binary cross-entropy of sigmoid(logits) against {0,1} labels,
/// computed in the numerically stable logit form.
template <typename T>
BasicLossResult<T> bce_with_logits(const BasicTensor<T>& logits, const BasicTensor<T>& labels);

template <typename T>
inline T sigmoid(T x) {
  return x >= T{0} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
}

/// Horizontal mirror of an [N,H,W,C] (or [H,W]) buffer along W.
template <typename T>
void flip_horizontal(T* data, int rows, int width, int channels);

#define PHOTOFIT_EXTERN_LAYERS(T)              \
  extern template class Conv2d<T>;             \
  extern template class TransposedConv2d<T>;   \
  extern template class GlobalAvgPool<T>;      \
  extern template class Dense<T>;              \
  extern template class Pointwise<T>;          \
  extern template class BatchNorm<T>;          \
  extern template class Reshape<T>;            \
  extern template class Gru<T>;                \
  extern template class AttentionPool<T>;      \
  extern template class LastStep<T>;

PHOTOFIT_EXTERN_LAYERS(float)
PHOTOFIT_EXTERN_LAYERS(double)
#undef PHOTOFIT_EXTERN_LAYERS

}  // namespace photofit
