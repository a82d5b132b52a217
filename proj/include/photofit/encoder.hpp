// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "photofit/face.hpp"
#include "photofit/model.hpp"

namespace photofit {

struct EncoderConfig {
  int image_size = 64;
  std::array<int, 4> widths{16, 32, 64, 128};
  int kernel = 4;
  int outputs = 16;  // reconstructable sliders

  /// 128-px input with 32/64/128/256 kernels.
  static EncoderConfig full_scale();
  /// Spatial size of the last conv block (input / 4).
  int map_resolution() const { return image_size / 4; }
};

/// Four [conv -> relu -> batchnorm] blocks (strides 1,2,1,2), global average
/// pooling and a linear head. The head starts at zero weights and bias 0.5.
class Encoder final : public Model {
 public:
  explicit Encoder(EncoderConfig cfg = {});

  const EncoderConfig& config() const { return cfg_; }
  void reset_parameters(Rng& rng);

  std::string kind() const override { return "encoder"; }
  Tensor forward(const Tensor& images, Mode mode) override;  // [N,S,S,3] -> [N,K]
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter<float>*> parameters() override;
  std::vector<NamedBuffer<float>> buffers() override;
  std::vector<NamedTensor> meta() const override;

  /// Last-block feature maps from the most recent forward, [N,R,R,C].
  const Tensor& last_features() const { return features_; }
  Dense<float>& head() { return head_; }

  std::vector<float> encode(const FaceImage& img);
  /// Per-feature activation maps M_f(y,x) = sum_k W[k,f] * f_k(y,x), [R,R,K].
  Tensor activation_maps(const FaceImage& img);
  /// Both at once from a single forward pass.
  std::pair<std::vector<float>, Tensor> encode_with_maps(const FaceImage& img);

 private:
  EncoderConfig cfg_;
  Sequential<float> blocks_;
  GlobalAvgPool<float> gap_;
  Dense<float> head_;
  Tensor features_;
};

/// Activation maps from feature maps [R,R,C] (or [1,R,R,C]) and head weights [C,K].
Tensor class_activation_maps(const Tensor& features, const Tensor& weights);

/// Stacks images into [N,S,S,3].
Tensor image_batch(std::span<const FaceImage> images);
Tensor image_tensor(const FaceImage& img);

/// Reconstructable slider values as [N,K_r] targets.
Tensor slider_targets(std::span<const SliderVector> sliders,
                      const SliderSchema& schema = default_schema());

}  // namespace photofit
