// SPDX-License-Identifier: Apache-2.0
#include "photofit/layers.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>

namespace photofit {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const Mat<T>>;
template <typename T>
using MapRow = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

template <typename T>
void uniform_fill(BasicTensor<T>& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

[[noreturn]] void channel_mismatch(const std::string& layer, int expected,
                                   const std::vector<int>& dims) {
  throw ConfigError(layer + ": expected " + std::to_string(expected) +
                    " input channels, got dims " + dims_to_string(dims));
}

}  // namespace

ConvGeometry same_geometry(int batch, int h, int w, int channels, int kernel, int stride) {
  if (stride != 1 && stride != 2) {
    throw ConfigError("conv stride must be 1 or 2, got " + std::to_string(stride));
  }
  if (h % stride != 0 || w % stride != 0) {
    throw ConfigError("conv input " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by stride " + std::to_string(stride));
  }
  ConvGeometry g;
  g.batch = batch;
  g.in_h = h;
  g.in_w = w;
  g.channels = channels;
  g.kernel = kernel;
  g.stride = stride;
  g.out_h = h / stride;
  g.out_w = w / stride;
  const int pad_h = std::max((g.out_h - 1) * stride + kernel - h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + kernel - w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const int c = g.channels;
  const std::size_t run = static_cast<std::size_t>(g.kernel) * c;
  const std::size_t row_len = run * g.kernel;
  T* row = col;
  for (int n = 0; n < g.batch; ++n) {
    const T* img = x + static_cast<std::size_t>(n) * g.in_h * g.in_w * c;
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox, row += row_len) {
        T* dst = row;
        const int ix0 = ox * g.stride - g.pad_left;
        const bool inside_x = ix0 >= 0 && ix0 + g.kernel <= g.in_w;
        for (int ky = 0; ky < g.kernel; ++ky, dst += run) {
          const int iy = oy * g.stride - g.pad_top + ky;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + run, T{0});
            continue;
          }
          const T* src = img + static_cast<std::size_t>(iy) * g.in_w * c;
          if (inside_x) {
            std::memcpy(dst, src + static_cast<std::size_t>(ix0) * c, sizeof(T) * run);
            continue;
          }
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ix0 + kx;
            T* d = dst + static_cast<std::size_t>(kx) * c;
            if (ix < 0 || ix >= g.in_w) {
              std::fill(d, d + c, T{0});
            } else {
              std::memcpy(d, src + static_cast<std::size_t>(ix) * c, sizeof(T) * c);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* x) {
  const int c = g.channels;
  const std::size_t run = static_cast<std::size_t>(g.kernel) * c;
  const std::size_t row_len = run * g.kernel;
  const T* row = col;
  for (int n = 0; n < g.batch; ++n) {
    T* img = x + static_cast<std::size_t>(n) * g.in_h * g.in_w * c;
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox, row += row_len) {
        const T* src = row;
        const int ix0 = ox * g.stride - g.pad_left;
        const int kx_lo = std::max(0, -ix0);
        const int kx_hi = std::min(g.kernel, g.in_w - ix0);
        for (int ky = 0; ky < g.kernel; ++ky, src += run) {
          const int iy = oy * g.stride - g.pad_top + ky;
          if (iy < 0 || iy >= g.in_h || kx_lo >= kx_hi) continue;
          T* dst = img + (static_cast<std::size_t>(iy) * g.in_w + ix0 + kx_lo) * c;
          const T* s = src + static_cast<std::size_t>(kx_lo) * c;
          const std::size_t len = static_cast<std::size_t>(kx_hi - kx_lo) * c;
          for (std::size_t i = 0; i < len; ++i) dst[i] += s[i];
        }
      }
    }
  }
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, int kernel,
                  int stride, bool bias)
    : Layer<T>(std::move(name)),
      in_channels_(in_channels),
      out_channels_(out_channels),
      k_(kernel),
      stride_(stride),
      has_bias_(bias),
      kernel_(this->name() + ".kernel", {kernel, kernel, in_channels, out_channels}),
      bias_(this->name() + ".bias", {out_channels}) {
  if (stride != 1 && stride != 2) throw ConfigError(this->name() + ": stride must be 1 or 2");
}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& x, Mode) {
  require_rank(x, 4, this->name().c_str());
  if (x.dim(3) != in_channels_) channel_mismatch(this->name(), in_channels_, x.dims());
  geom_ = same_geometry(x.dim(0), x.dim(1), x.dim(2), in_channels_, k_, stride_);
  const Eigen::Index rows = Eigen::Index(geom_.batch) * geom_.out_h * geom_.out_w;
  const Eigen::Index inner = Eigen::Index(k_) * k_ * in_channels_;
  col_.resize(static_cast<std::size_t>(rows * inner));
  im2col(x.data(), geom_, col_.data());

  BasicTensor<T> out({geom_.batch, geom_.out_h, geom_.out_w, out_channels_});
  MapMat<T> y(out.data(), rows, out_channels_);
  CMapMat<T> c(col_.data(), rows, inner);
  CMapMat<T> w(kernel_.value.data(), inner, out_channels_);
  y.noalias() = c * w;
  if (has_bias_) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.data(), out_channels_);
    y.rowwise() += b;
  }
  return out;
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward(const BasicTensor<T>& grad_out) {
  const Eigen::Index rows = Eigen::Index(geom_.batch) * geom_.out_h * geom_.out_w;
  const Eigen::Index inner = Eigen::Index(k_) * k_ * in_channels_;
  if (grad_out.size() != static_cast<std::size_t>(rows * out_channels_)) {
    throw ConfigError(this->name() + ": gradient dims " + dims_to_string(grad_out.dims()) +
                      " do not match last forward");
  }
  CMapMat<T> dy(grad_out.data(), rows, out_channels_);
  CMapMat<T> c(col_.data(), rows, inner);
  CMapMat<T> w(kernel_.value.data(), inner, out_channels_);
  if (kernel_.trainable) {
    MapMat<T> dw(kernel_.grad.data(), inner, out_channels_);
    dw.noalias() += c.transpose() * dy;
  }
  if (has_bias_ && bias_.trainable) {
    MapRow<T> db(bias_.grad.data(), out_channels_);
    db += dy.colwise().sum();
  }
  AlignedVector<T> dcol(static_cast<std::size_t>(rows * inner));
  MapMat<T> dc(dcol.data(), rows, inner);
  dc.noalias() = dy * w.transpose();
  BasicTensor<T> dx({geom_.batch, geom_.in_h, geom_.in_w, in_channels_});
  col2im(dcol.data(), geom_, dx.data());
  return dx;
}

template <typename T>
void Conv2d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&kernel_);
  if (has_bias_) out.push_back(&bias_);
}

template <typename T>
void Conv2d<T>::reset_parameters(Rng& rng) {
  const double fan_in = double(k_) * k_ * in_channels_;
  uniform_fill(kernel_.value, std::sqrt(6.0 / fan_in), rng);
  bias_.value.fill(T{0});
}

// ------------------------------------------------------- TransposedConv2d

template <typename T>
TransposedConv2d<T>::TransposedConv2d(std::string name, int in_channels, int out_channels,
                                      int kernel, int stride, bool bias)
    : Layer<T>(std::move(name)),
      in_channels_(in_channels),
      out_channels_(out_channels),
      k_(kernel),
      stride_(stride),
      has_bias_(bias),
      kernel_(this->name() + ".kernel", {kernel, kernel, out_channels, in_channels}),
      bias_(this->name() + ".bias", {out_channels}) {
  if (stride != 1 && stride != 2) throw ConfigError(this->name() + ": stride must be 1 or 2");
}

template <typename T>
BasicTensor<T> TransposedConv2d<T>::forward(const BasicTensor<T>& x, Mode) {
  require_rank(x, 4, this->name().c_str());
  if (x.dim(3) != in_channels_) channel_mismatch(this->name(), in_channels_, x.dims());
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2);
  geom_ = same_geometry(n, h * stride_, w * stride_, out_channels_, k_, stride_);
  input_ = x;
  const Eigen::Index rows = Eigen::Index(n) * h * w;
  const Eigen::Index inner = Eigen::Index(k_) * k_ * out_channels_;
  CMapMat<T> xm(x.data(), rows, in_channels_);
  CMapMat<T> wm(kernel_.value.data(), inner, in_channels_);
  AlignedVector<T> col(static_cast<std::size_t>(rows * inner));
  MapMat<T> cm(col.data(), rows, inner);
  cm.noalias() = xm * wm.transpose();

  BasicTensor<T> out({n, geom_.in_h, geom_.in_w, out_channels_});
  col2im(col.data(), geom_, out.data());
  if (has_bias_) {
    MapMat<T> y(out.data(), Eigen::Index(out.size() / out_channels_), out_channels_);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.data(), out_channels_);
    y.rowwise() += b;
  }
  return out;
}

template <typename T>
BasicTensor<T> TransposedConv2d<T>::backward(const BasicTensor<T>& grad_out) {
  if (grad_out.size() !=
      static_cast<std::size_t>(geom_.batch) * geom_.in_h * geom_.in_w * out_channels_) {
    throw ConfigError(this->name() + ": gradient dims " + dims_to_string(grad_out.dims()) +
                      " do not match last forward");
  }
  const Eigen::Index rows = Eigen::Index(geom_.batch) * geom_.out_h * geom_.out_w;
  const Eigen::Index inner = Eigen::Index(k_) * k_ * out_channels_;
  AlignedVector<T> col(static_cast<std::size_t>(rows * inner));
  im2col(grad_out.data(), geom_, col.data());
  CMapMat<T> cm(col.data(), rows, inner);
  CMapMat<T> wm(kernel_.value.data(), inner, in_channels_);
  CMapMat<T> xm(input_.data(), rows, in_channels_);
  if (kernel_.trainable) {
    MapMat<T> dw(kernel_.grad.data(), inner, in_channels_);
    dw.noalias() += cm.transpose() * xm;
  }
  if (has_bias_ && bias_.trainable) {
    CMapMat<T> dy(grad_out.data(), Eigen::Index(grad_out.size() / out_channels_), out_channels_);
    MapRow<T> db(bias_.grad.data(), out_channels_);
    db += dy.colwise().sum();
  }
  BasicTensor<T> dx(input_.dims());
  MapMat<T> dxm(dx.data(), rows, in_channels_);
  dxm.noalias() = cm * wm;
  return dx;
}

template <typename T>
void TransposedConv2d<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&kernel_);
  if (has_bias_) out.push_back(&bias_);
}

template <typename T>
void TransposedConv2d<T>::reset_parameters(Rng& rng) {
  const double fan_in = double(k_) * k_ * in_channels_ / (double(stride_) * stride_);
  uniform_fill(kernel_.value, std::sqrt(6.0 / fan_in), rng);
  bias_.value.fill(T{0});
}

// --------------------------------------------------------- GlobalAvgPool

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::forward(const BasicTensor<T>& x, Mode) {
  require_rank(x, 4, this->name().c_str());
  in_dims_ = x.dims();
  const int n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  BasicTensor<T> out({n, c});
  for (int b = 0; b < n; ++b) {
    CMapMat<T> m(x.data() + std::size_t(b) * hw * c, hw, c);
    MapRow<T> o(out.data() + std::size_t(b) * c, c);
    o = m.colwise().sum() / T(hw);
  }
  return out;
}

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::backward(const BasicTensor<T>& grad_out) {
  const int n = in_dims_[0], hw = in_dims_[1] * in_dims_[2], c = in_dims_[3];
  BasicTensor<T> dx(in_dims_);
  const T scale = T(1) / T(hw);
  for (int b = 0; b < n; ++b) {
    const T* g = grad_out.data() + std::size_t(b) * c;
    T* d = dx.data() + std::size_t(b) * hw * c;
    for (int p = 0; p < hw; ++p)
      for (int ci = 0; ci < c; ++ci) d[std::size_t(p) * c + ci] = g[ci] * scale;
  }
  return dx;
}

// ----------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(std::string name, int in_features, int out_features)
    : Layer<T>(std::move(name)),
      in_(in_features),
      out_(out_features),
      weights_(this->name() + ".weights", {in_features, out_features}),
      bias_(this->name() + ".bias", {out_features}) {}

template <typename T>
BasicTensor<T> Dense<T>::forward(const BasicTensor<T>& x, Mode) {
  require_rank(x, 2, this->name().c_str());
  if (x.dim(1) != in_) {
    throw ConfigError(this->name() + ": expected " + std::to_string(in_) +
                      " input features, got dims " + dims_to_string(x.dims()));
  }
  input_ = x;
  const int n = x.dim(0);
  BasicTensor<T> out({n, out_});
  MapMat<T> y(out.data(), n, out_);
  y.noalias() = CMapMat<T>(x.data(), n, in_) * CMapMat<T>(weights_.value.data(), in_, out_);
  y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.value.data(), out_);
  return out;
}

template <typename T>
BasicTensor<T> Dense<T>::backward(const BasicTensor<T>& grad_out) {
  const int n = input_.dim(0);
  CMapMat<T> dy(grad_out.data(), n, out_);
  CMapMat<T> x(input_.data(), n, in_);
  if (weights_.trainable) {
    MapMat<T>(weights_.grad.data(), in_, out_).noalias() += x.transpose() * dy;
  }
  if (bias_.trainable) MapRow<T>(bias_.grad.data(), out_) += dy.colwise().sum();
  BasicTensor<T> dx({n, in_});
  MapMat<T>(dx.data(), n, in_).noalias() =
      dy * CMapMat<T>(weights_.value.data(), in_, out_).transpose();
  return dx;
}

template <typename T>
void Dense<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&weights_);
  out.push_back(&bias_);
}

template <typename T>
void Dense<T>::reset_parameters(Rng& rng) {
  uniform_fill(weights_.value, std::sqrt(6.0 / in_), rng);
  bias_.value.fill(T{0});
}

// ------------------------------------------------------------- Pointwise

template <typename T>
BasicTensor<T> Pointwise<T>::forward(const BasicTensor<T>& x, Mode) {
  BasicTensor<T> out = x;
  switch (kind_) {
    case Activation::kRelu:
      cache_ = x;
      for (auto& v : out.values()) v = v > T{0} ? v : T{0};
      break;
    case Activation::kSigmoid:
      for (auto& v : out.values()) v = sigmoid(v);
      cache_ = out;
      break;
    case Activation::kTanh:
      for (auto& v : out.values()) v = std::tanh(v);
      cache_ = out;
      break;
  }
  return out;
}

template <typename T>
BasicTensor<T> Pointwise<T>::backward(const BasicTensor<T>& grad_out) {
  BasicTensor<T> dx = grad_out;
  auto d = dx.values();
  auto c = cache_.values();
  switch (kind_) {
    case Activation::kRelu:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = c[i] > T{0} ? d[i] : T{0};
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= c[i] * (T{1} - c[i]);
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= T{1} - c[i] * c[i];
      break;
  }
  return dx;
}

// ------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::string name, int channels)
    : Layer<T>(std::move(name)),
      channels_(channels),
      scale_(this->name() + ".scale", {channels}),
      shift_(this->name() + ".shift", {channels}),
      running_mean_({channels}, T{0}),
      running_var_({channels}, T{1}) {
  scale_.value.fill(T{1});
}

template <typename T>
BasicTensor<T> BatchNorm<T>::forward(const BasicTensor<T>& x, Mode mode) {
  if (x.rank() < 2 || x.dims().back() != channels_) {
    channel_mismatch(this->name(), channels_, x.dims());
  }
  last_mode_ = mode;
  const std::size_t c = static_cast<std::size_t>(channels_);
  const std::size_t rows = x.size() / c;
  BasicTensor<T> out(x.dims());
  xhat_.resize(x.size());
  inv_std_.assign(c, T{0});
  const T* in = x.data();

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (mode == Mode::kTrain) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) mean[j] += in[r * c + j];
    for (auto& m : mean) m /= double(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = in[r * c + j] - mean[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < c; ++j) {
      const double biased = var[j] / double(rows);
      const double unbiased = rows > 1 ? var[j] / double(rows - 1) : biased;
      var[j] = biased;
      running_mean_[j] = T(kMomentum * running_mean_[j] + (1.0 - kMomentum) * mean[j]);
      running_var_[j] = T(kMomentum * running_var_[j] + (1.0 - kMomentum) * unbiased);
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = running_mean_[j];
      var[j] = running_var_[j];
    }
  }
  for (std::size_t j = 0; j < c; ++j) inv_std_[j] = T(1.0 / std::sqrt(var[j] + kEpsilon));
  T* o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const T xh = T((in[r * c + j] - mean[j])) * inv_std_[j];
      xhat_[r * c + j] = xh;
      o[r * c + j] = scale_.value[j] * xh + shift_.value[j];
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> BatchNorm<T>::backward(const BasicTensor<T>& grad_out) {
  const std::size_t c = static_cast<std::size_t>(channels_);
  const std::size_t rows = grad_out.size() / c;
  const T* dy = grad_out.data();
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      sum_dy[j] += dy[r * c + j];
      sum_dy_xhat[j] += double(dy[r * c + j]) * xhat_[r * c + j];
    }
  if (scale_.trainable)
    for (std::size_t j = 0; j < c; ++j) scale_.grad[j] += T(sum_dy_xhat[j]);
  if (shift_.trainable)
    for (std::size_t j = 0; j < c; ++j) shift_.grad[j] += T(sum_dy[j]);

  BasicTensor<T> dx(grad_out.dims());
  T* d = dx.data();
  if (last_mode_ == Mode::kInfer) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j)
        d[r * c + j] = dy[r * c + j] * scale_.value[j] * inv_std_[j];
    return dx;
  }
  for (std::size_t j = 0; j < c; ++j) {
    sum_dy[j] /= double(rows);
    sum_dy_xhat[j] /= double(rows);
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const double g = double(scale_.value[j]) * inv_std_[j];
      d[r * c + j] =
          T(g * (dy[r * c + j] - sum_dy[j] - double(xhat_[r * c + j]) * sum_dy_xhat[j]));
    }
  return dx;
}

template <typename T>
void BatchNorm<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&scale_);
  out.push_back(&shift_);
}

template <typename T>
void BatchNorm<T>::collect_buffers(std::vector<NamedBuffer<T>>& out) {
  out.push_back({this->name() + ".running_mean", &running_mean_});
  out.push_back({this->name() + ".running_var", &running_var_});
}

// --------------------------------------------------------------- Reshape

template <typename T>
BasicTensor<T> Reshape<T>::forward(const BasicTensor<T>& x, Mode) {
  in_dims_ = x.dims();
  std::vector<int> dims{x.dim(0)};
  dims.insert(dims.end(), trailing_.begin(), trailing_.end());
  if (dims_product(dims) != x.size()) {
    throw ConfigError(this->name() + ": cannot reshape " + dims_to_string(x.dims()) + " to " +
                      dims_to_string(dims));
  }
  return x.reshaped(std::move(dims));
}

template <typename T>
BasicTensor<T> Reshape<T>::backward(const BasicTensor<T>& grad_out) {
  return grad_out.reshaped(in_dims_);
}

// ------------------------------------------------------------------- Gru

template <typename T>
Gru<T>::Gru(std::string name, int input_size, int hidden_size)
    : Layer<T>(std::move(name)),
      input_(input_size),
      hidden_(hidden_size),
      w_x_(this->name() + ".w_input", {input_size, 3 * hidden_size}),
      w_h_(this->name() + ".w_hidden", {hidden_size, 3 * hidden_size}),
      b_(this->name() + ".bias", {3 * hidden_size}) {}

template <typename T>
BasicTensor<T> Gru<T>::forward(const BasicTensor<T>& x, Mode) {
  require_rank(x, 3, this->name().c_str());
  if (x.dim(2) != input_) channel_mismatch(this->name(), input_, x.dims());
  batch_ = x.dim(0);
  steps_ = x.dim(1);
  input_cache_ = x;
  const int n = batch_, t_len = steps_, h = hidden_, d = input_;
  const Eigen::Index g3 = 3 * h;

  Mat<T> ax = CMapMat<T>(x.data(), Eigen::Index(n) * t_len, d) *
              CMapMat<T>(w_x_.value.data(), d, g3);
  ax.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b_.value.data(), g3);
  CMapMat<T> wh(w_h_.value.data(), h, g3);

  h_prev_.assign(t_len, {});
  z_.assign(t_len, {});
  r_.assign(t_len, {});
  n_.assign(t_len, {});
  rh_.assign(t_len, {});
  Mat<T> hs = Mat<T>::Zero(n, h);
  BasicTensor<T> out({n, t_len, h});
  for (int t = 0; t < t_len; ++t) {
    Mat<T> axt(n, g3);
    for (int b = 0; b < n; ++b) axt.row(b) = ax.row(Eigen::Index(b) * t_len + t);
    Mat<T> hzr = hs * wh.leftCols(2 * h);
    Mat<T> z(n, h), r(n, h);
    for (int b = 0; b < n; ++b)
      for (int j = 0; j < h; ++j) {
        z(b, j) = sigmoid(axt(b, j) + hzr(b, j));
        r(b, j) = sigmoid(axt(b, h + j) + hzr(b, h + j));
      }
    Mat<T> rh = r.cwiseProduct(hs);
    Mat<T> an = axt.rightCols(h) + rh * wh.rightCols(h);
    Mat<T> nn = an.array().tanh().matrix();
    auto store = [](const Mat<T>& m) { return AlignedVector<T>(m.data(), m.data() + m.size()); };
    h_prev_[t] = store(hs);
    z_[t] = store(z);
    r_[t] = store(r);
    n_[t] = store(nn);
    rh_[t] = store(rh);
    hs = (Mat<T>::Ones(n, h) - z).cwiseProduct(hs) + z.cwiseProduct(nn);
    for (int b = 0; b < n; ++b)
      for (int j = 0; j < h; ++j) out[(std::size_t(b) * t_len + t) * h + j] = hs(b, j);
  }
  return out;
}

template <typename T>
BasicTensor<T> Gru<T>::backward(const BasicTensor<T>& grad_out) {
  const int n = batch_, t_len = steps_, h = hidden_, d = input_;
  const Eigen::Index g3 = 3 * h;
  CMapMat<T> wh(w_h_.value.data(), h, g3);
  Mat<T> dwh = Mat<T>::Zero(h, g3);
  Mat<T> dax = Mat<T>::Zero(Eigen::Index(n) * t_len, g3);
  Mat<T> dh_next = Mat<T>::Zero(n, h);
  for (int t = t_len - 1; t >= 0; --t) {
    CMapMat<T> hp(h_prev_[t].data(), n, h), z(z_[t].data(), n, h), r(r_[t].data(), n, h),
        nn(n_[t].data(), n, h), rh(rh_[t].data(), n, h);
    Mat<T> dh = dh_next;
    for (int b = 0; b < n; ++b)
      for (int j = 0; j < h; ++j) dh(b, j) += grad_out[(std::size_t(b) * t_len + t) * h + j];

    Mat<T> dz = dh.cwiseProduct(nn - hp);
    Mat<T> dn = dh.cwiseProduct(z);
    Mat<T> dhp = dh.cwiseProduct((Mat<T>::Ones(n, h) - z));
    Mat<T> dan = dn.array() * (T{1} - nn.array().square());
    dwh.rightCols(h).noalias() += rh.transpose() * dan;
    Mat<T> drh = dan * wh.rightCols(h).transpose();
    Mat<T> dr = drh.cwiseProduct(hp);
    dhp += drh.cwiseProduct(r);
    Mat<T> daz = dz.array() * z.array() * (T{1} - z.array());
    Mat<T> dar = dr.array() * r.array() * (T{1} - r.array());
    dwh.leftCols(h).noalias() += hp.transpose() * daz;
    dwh.middleCols(h, h).noalias() += hp.transpose() * dar;
    dhp.noalias() += daz * wh.leftCols(h).transpose();
    dhp.noalias() += dar * wh.middleCols(h, h).transpose();
    for (int b = 0; b < n; ++b) {
      auto row = dax.row(Eigen::Index(b) * t_len + t);
      row.head(h) = daz.row(b);
      row.segment(h, h) = dar.row(b);
      row.tail(h) = dan.row(b);
    }
    dh_next = dhp;
  }
  CMapMat<T> xm(input_cache_.data(), Eigen::Index(n) * t_len, d);
  if (w_h_.trainable) MapMat<T>(w_h_.grad.data(), h, g3) += dwh;
  if (w_x_.trainable) MapMat<T>(w_x_.grad.data(), d, g3).noalias() += xm.transpose() * dax;
  if (b_.trainable) MapRow<T>(b_.grad.data(), g3) += dax.colwise().sum();
  BasicTensor<T> dx({n, t_len, d});
  MapMat<T>(dx.data(), Eigen::Index(n) * t_len, d).noalias() =
      dax * CMapMat<T>(w_x_.value.data(), d, g3).transpose();
  return dx;
}

template <typename T>
void Gru<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&w_x_);
  out.push_back(&w_h_);
  out.push_back(&b_);
}

template <typename T>
void Gru<T>::reset_parameters(Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(hidden_));
  uniform_fill(w_x_.value, bound, rng);
  uniform_fill(w_h_.value, bound, rng);
  b_.value.fill(T{0});
}

// --------------------------------------------------------- AttentionPool

template <typename T>
AttentionPool<T>::AttentionPool(std::string name, int hidden_size)
    : Layer<T>(std::move(name)), hidden_(hidden_size), w_(this->name() + ".weights", {hidden_size}) {}

template <typename T>
BasicTensor<T> AttentionPool<T>::forward(const BasicTensor<T>& x, Mode) {
  require_rank(x, 3, this->name().c_str());
  if (x.dim(2) != hidden_) channel_mismatch(this->name(), hidden_, x.dims());
  const int n = x.dim(0), t_len = x.dim(1), h = hidden_;
  input_ = x;
  m_ = BasicTensor<T>(x.dims());
  alpha_ = BasicTensor<T>({n, t_len});
  out_ = BasicTensor<T>({n, h});
  for (int b = 0; b < n; ++b) {
    CMapMat<T> xb(x.data() + std::size_t(b) * t_len * h, t_len, h);
    MapMat<T> mb(m_.data() + std::size_t(b) * t_len * h, t_len, h);
    mb = xb.array().tanh().matrix();
    Eigen::Matrix<T, Eigen::Dynamic, 1> s =
        mb * Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(w_.value.data(), h);
    const T mx = s.maxCoeff();
    Eigen::Matrix<T, Eigen::Dynamic, 1> e = (s.array() - mx).exp().matrix();
    e /= e.sum();
    for (int t = 0; t < t_len; ++t) alpha_[std::size_t(b) * t_len + t] = e(t);
    Eigen::Matrix<T, 1, Eigen::Dynamic> r = e.transpose() * xb;
    MapRow<T>(out_.data() + std::size_t(b) * h, h) = r.array().tanh().matrix();
  }
  return out_;
}

template <typename T>
BasicTensor<T> AttentionPool<T>::backward(const BasicTensor<T>& grad_out) {
  const int n = input_.dim(0), t_len = input_.dim(1), h = hidden_;
  BasicTensor<T> dx(input_.dims());
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> w(w_.value.data(), h);
  Eigen::Matrix<T, Eigen::Dynamic, 1> dw = Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(h);
  for (int b = 0; b < n; ++b) {
    CMapMat<T> xb(input_.data() + std::size_t(b) * t_len * h, t_len, h);
    CMapMat<T> mb(m_.data() + std::size_t(b) * t_len * h, t_len, h);
    MapMat<T> dxb(dx.data() + std::size_t(b) * t_len * h, t_len, h);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> a(alpha_.data() + std::size_t(b) * t_len,
                                                            t_len);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> o(out_.data() + std::size_t(b) * h, h);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> g(grad_out.data() + std::size_t(b) * h,
                                                            h);
    Eigen::Matrix<T, 1, Eigen::Dynamic> dr = g.array() * (T{1} - o.array().square());
    dxb = a * dr;
    Eigen::Matrix<T, Eigen::Dynamic, 1> da = xb * dr.transpose();
    const T weighted = a.dot(da);
    Eigen::Matrix<T, Eigen::Dynamic, 1> ds = a.array() * (da.array() - weighted);
    Mat<T> dm = ds * w.transpose();
    dxb.array() += dm.array() * (T{1} - mb.array().square());
    dw.noalias() += mb.transpose() * ds;
  }
  if (w_.trainable)
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(w_.grad.data(), h) += dw;
  return dx;
}

template <typename T>
void AttentionPool<T>::collect_parameters(std::vector<Parameter<T>*>& out) {
  out.push_back(&w_);
}

template <typename T>
void AttentionPool<T>::reset_parameters(Rng& rng) {
  uniform_fill(w_.value, 1.0 / std::sqrt(double(hidden_)), rng);
}

// -------------------------------------------------------------- LastStep

template <typename T>
BasicTensor<T> LastStep<T>::forward(const BasicTensor<T>& x, Mode) {
  require_rank(x, 3, this->name().c_str());
  in_dims_ = x.dims();
  const int n = x.dim(0), t_len = x.dim(1), h = x.dim(2);
  BasicTensor<T> out({n, h});
  for (int b = 0; b < n; ++b)
    std::copy_n(x.data() + (std::size_t(b) * t_len + t_len - 1) * h, h,
                out.data() + std::size_t(b) * h);
  return out;
}

template <typename T>
BasicTensor<T> LastStep<T>::backward(const BasicTensor<T>& grad_out) {
  const int n = in_dims_[0], t_len = in_dims_[1], h = in_dims_[2];
  BasicTensor<T> dx(in_dims_);
  for (int b = 0; b < n; ++b)
    std::copy_n(grad_out.data() + std::size_t(b) * h, h,
                dx.data() + (std::size_t(b) * t_len + t_len - 1) * h);
  return dx;
}

// ---------------------------------------------------------------- losses

template <typename T>
BasicLossResult<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.dims() != target.dims()) {
    throw ConfigError("mse_loss: dims " + dims_to_string(pred.dims()) + " vs " +
                      dims_to_string(target.dims()));
  }
  BasicLossResult<T> res;
  res.grad = BasicTensor<T>(pred.dims());
  const double n = double(pred.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = double(pred[i]) - double(target[i]);
    s += d * d;
    res.grad[i] = T(2.0 * d / n);
  }
  res.loss = s / n;
  return res;
}

template <typename T>
BasicLossResult<T> bce_with_logits(const BasicTensor<T>& logits, const BasicTensor<T>& labels) {
  if (logits.dims() != labels.dims()) {
    throw ConfigError("bce_with_logits: dims " + dims_to_string(logits.dims()) + " vs " +
                      dims_to_string(labels.dims()));
  }
  BasicLossResult<T> res;
  res.grad = BasicTensor<T>(logits.dims());
  const double n = double(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i], y = labels[i];
    s += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    res.grad[i] = T((sigmoid(z) - y) / n);
  }
  res.loss = s / n;
  return res;
}

template <typename T>
void flip_horizontal(T* data, int rows, int width, int channels) {
  for (int r = 0; r < rows; ++r) {
    T* row = data + std::size_t(r) * width * channels;
    for (int a = 0, b = width - 1; a < b; ++a, --b)
      for (int c = 0; c < channels; ++c)
        std::swap(row[std::size_t(a) * channels + c], row[std::size_t(b) * channels + c]);
  }
}

#define PHOTOFIT_INSTANTIATE(T)                                                            \
  template void im2col<T>(const T*, const ConvGeometry&, T*);                              \
  template void col2im<T>(const T*, const ConvGeometry&, T*);                              \
  template class Conv2d<T>;                                                                \
  template class TransposedConv2d<T>;                                                      \
  template class GlobalAvgPool<T>;                                                         \
  template class Dense<T>;                                                                 \
  template class Pointwise<T>;                                                             \
  template class BatchNorm<T>;                                                             \
  template class Reshape<T>;                                                               \
  template class Gru<T>;                                                                   \
  template class AttentionPool<T>;                                                         \
  template class LastStep<T>;                                                              \
  template BasicLossResult<T> mse_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&);   \
  template BasicLossResult<T> bce_with_logits<T>(const BasicTensor<T>&,                    \
                                                 const BasicTensor<T>&);                   \
  template void flip_horizontal<T>(T*, int, int, int);

PHOTOFIT_INSTANTIATE(float)
PHOTOFIT_INSTANTIATE(double)

}  // namespace photofit
