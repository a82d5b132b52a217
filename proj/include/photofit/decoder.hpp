// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "photofit/face.hpp"
#include "photofit/model.hpp"

namespace photofit {

struct DecoderConfig {
  int image_size = 64;
  int inputs = 18;  // full slider vector, fixed sliders included
  int base_channels = 128;
  std::array<int, 4> widths{64, 32, 16, 8};
  int kernel = 4;

  int base_size() const { return image_size / 16; }
};

/// Dense -> relu -> batchnorm -> [B,B,C] reshape, four stride-2 transposed
/// conv blocks, and a stride-1 transposed conv to RGB with a sigmoid.
class Decoder final : public Model {
 public:
  explicit Decoder(DecoderConfig cfg = {});

  const DecoderConfig& config() const { return cfg_; }
  void reset_parameters(Rng& rng);

  std::string kind() const override { return "decoder"; }
  Tensor forward(const Tensor& sliders, Mode mode) override;  // [N,18] -> [N,S,S,3]
  Tensor backward(const Tensor& grad_out) override;
  std::vector<Parameter<float>*> parameters() override;
  std::vector<NamedBuffer<float>> buffers() override;
  std::vector<NamedTensor> meta() const override;

  FaceImage decode(const SliderVector& s);
  FaceImage decode(std::span<const float> values);

 private:
  DecoderConfig cfg_;
  Sequential<float> net_;
};

}  // namespace photofit
