// SPDX-License-Identifier: Apache-2.0
#include "photofit/decoder.hpp"

namespace photofit {

Decoder::Decoder(DecoderConfig cfg) : cfg_(cfg), net_("dec") {
  if (cfg_.image_size % 16 != 0) throw ConfigError("decoder image size must be a multiple of 16");
  const int b = cfg_.base_size();
  const int flat = b * b * cfg_.base_channels;
  net_.add<Dense<float>>("dec.input", cfg_.inputs, flat);
  net_.add<Pointwise<float>>("dec.input.relu", Activation::kRelu);
  net_.add<BatchNorm<float>>("dec.input.bn", flat);
  net_.add<Reshape<float>>("dec.reshape", std::vector<int>{b, b, cfg_.base_channels});
  int cin = cfg_.base_channels;
  for (int i = 0; i < 4; ++i) {
    const std::string p = "dec.block" + std::to_string(i);
    const int w = cfg_.widths[std::size_t(i)];
    net_.add<TransposedConv2d<float>>(p + ".tconv", cin, w, cfg_.kernel, 2);
    net_.add<Pointwise<float>>(p + ".relu", Activation::kRelu);
    net_.add<BatchNorm<float>>(p + ".bn", w);
    cin = w;
  }
  net_.add<TransposedConv2d<float>>("dec.out", cin, 3, cfg_.kernel, 1);
  net_.add<Pointwise<float>>("dec.sigmoid", Activation::kSigmoid);
}

void Decoder::reset_parameters(Rng& rng) { net_.reset_parameters(rng); }

Tensor Decoder::forward(const Tensor& sliders, Mode mode) {
  require_rank(sliders, 2, "decoder input");
  if (sliders.dim(1) != cfg_.inputs) {
    throw ConfigError("decoder expects [N," + std::to_string(cfg_.inputs) + "] sliders, got " +
                      dims_to_string(sliders.dims()));
  }
  return net_.forward(sliders, mode);
}

Tensor Decoder::backward(const Tensor& grad_out) { return net_.backward(grad_out); }

std::vector<Parameter<float>*> Decoder::parameters() { return net_.parameters(); }

std::vector<NamedBuffer<float>> Decoder::buffers() { return net_.buffers(); }

std::vector<NamedTensor> Decoder::meta() const {
  return {
      {"meta.image_size", Tensor({1}, float(cfg_.image_size))},
      {"meta.inputs", Tensor({1}, float(cfg_.inputs))},
      {"meta.base_channels", Tensor({1}, float(cfg_.base_channels))},
      {"meta.widths", Tensor({4}, std::vector<float>(cfg_.widths.begin(), cfg_.widths.end()))},
      {"meta.kernel", Tensor({1}, float(cfg_.kernel))},
  };
}

FaceImage Decoder::decode(const SliderVector& s) { return decode(s.values); }

FaceImage Decoder::decode(std::span<const float> values) {
  Tensor in({1, int(values.size())}, std::vector<float>(values.begin(), values.end()));
  Tensor out = forward(in, Mode::kInfer);
  FaceImage img;
  img.width = img.height = cfg_.image_size;
  img.rgb.assign(out.values().begin(), out.values().end());
  return img;
}

}  // namespace photofit
