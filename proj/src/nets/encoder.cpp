// SPDX-License-Identifier: Apache-2.0
#include "photofit/encoder.hpp"

#include <cstring>

namespace photofit {

EncoderConfig EncoderConfig::full_scale() {
  EncoderConfig c;
  c.image_size = 128;
  c.widths = {32, 64, 128, 256};
  return c;
}

Encoder::Encoder(EncoderConfig cfg)
    : cfg_(cfg), blocks_("enc"), gap_("enc.gap"), head_("enc.head", cfg.widths[3], cfg.outputs) {
  if (cfg_.image_size % 4 != 0) throw ConfigError("encoder image size must be a multiple of 4");
  const int strides[4] = {1, 2, 1, 2};
  int cin = 3;
  for (int i = 0; i < 4; ++i) {
    const std::string p = "enc.block" + std::to_string(i);
    blocks_.add<Conv2d<float>>(p + ".conv", cin, cfg_.widths[std::size_t(i)], cfg_.kernel, strides[i]);
    blocks_.add<Pointwise<float>>(p + ".relu", Activation::kRelu);
    blocks_.add<BatchNorm<float>>(p + ".bn", cfg_.widths[std::size_t(i)]);
    cin = cfg_.widths[std::size_t(i)];
  }
  head_.bias().value.fill(0.5f);
}

void Encoder::reset_parameters(Rng& rng) {
  blocks_.reset_parameters(rng);
  head_.weights().value.fill(0.0f);
  head_.bias().value.fill(0.5f);
}

Tensor Encoder::forward(const Tensor& images, Mode mode) {
  require_rank(images, 4, "encoder input");
  if (images.dim(1) != cfg_.image_size || images.dim(2) != cfg_.image_size || images.dim(3) != 3) {
    throw ConfigError("encoder expects [N," + std::to_string(cfg_.image_size) + "," +
                      std::to_string(cfg_.image_size) + ",3] images, got " +
                      dims_to_string(images.dims()));
  }
  features_ = blocks_.forward(images, mode);
  return head_.forward(gap_.forward(features_, mode), mode);
}

Tensor Encoder::backward(const Tensor& grad_out) {
  return blocks_.backward(gap_.backward(head_.backward(grad_out)));
}

std::vector<Parameter<float>*> Encoder::parameters() {
  auto p = blocks_.parameters();
  for (auto* q : head_.parameters()) p.push_back(q);
  return p;
}

std::vector<NamedBuffer<float>> Encoder::buffers() { return blocks_.buffers(); }

std::vector<NamedTensor> Encoder::meta() const {
  return {
      {"meta.image_size", Tensor({1}, float(cfg_.image_size))},
      {"meta.widths", Tensor({4}, std::vector<float>(cfg_.widths.begin(), cfg_.widths.end()))},
      {"meta.kernel", Tensor({1}, float(cfg_.kernel))},
      {"meta.outputs", Tensor({1}, float(cfg_.outputs))},
  };
}

std::vector<float> Encoder::encode(const FaceImage& img) { return encode_with_maps(img).first; }

Tensor Encoder::activation_maps(const FaceImage& img) { return encode_with_maps(img).second; }

std::pair<std::vector<float>, Tensor> Encoder::encode_with_maps(const FaceImage& img) {
  Tensor y = forward(image_tensor(img), Mode::kInfer);
  return {std::vector<float>(y.values().begin(), y.values().end()),
          class_activation_maps(features_, head_.weights().value)};
}

Tensor class_activation_maps(const Tensor& features, const Tensor& weights) {
  const int r = features.rank();
  if (r != 3 && !(r == 4 && features.dim(0) == 1)) {
    throw ConfigError("activation maps need one [R,R,C] feature stack, got " +
                      dims_to_string(features.dims()));
  }
  const int h = features.dim(r - 3), w = features.dim(r - 2), c = features.dim(r - 1);
  require_rank(weights, 2, "activation map weights");
  if (weights.dim(0) != c) throw ConfigError("activation map weights do not match feature width");
  const int k = weights.dim(1);
  Tensor out({h, w, k});
  for (int p = 0; p < h * w; ++p) {
    const float* f = features.data() + std::size_t(p) * c;
    float* o = out.data() + std::size_t(p) * k;
    for (int ch = 0; ch < c; ++ch) {
      const float fv = f[ch];
      const float* wr = weights.data() + std::size_t(ch) * k;
      for (int j = 0; j < k; ++j) o[j] += fv * wr[j];
    }
  }
  return out;
}

Tensor image_tensor(const FaceImage& img) {
  return Tensor({1, img.height, img.width, 3}, img.rgb);
}

Tensor image_batch(std::span<const FaceImage> images) {
  if (images.empty()) throw ConfigError("empty image batch");
  const int s = images[0].height, w = images[0].width;
  Tensor out({int(images.size()), s, w, 3});
  const std::size_t per = std::size_t(s) * w * 3;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].rgb.size() != per) throw ConfigError("image batch: mixed sizes");
    std::memcpy(out.data() + i * per, images[i].rgb.data(), per * sizeof(float));
  }
  return out;
}

Tensor slider_targets(std::span<const SliderVector> sliders, const SliderSchema& schema) {
  const int kr = schema.reconstructable_count();
  Tensor out({int(sliders.size()), kr});
  for (std::size_t i = 0; i < sliders.size(); ++i)
    for (int j = 0; j < kr; ++j)
      out[i * std::size_t(kr) + std::size_t(j)] =
          sliders[i].values[std::size_t(schema.reconstructable()[std::size_t(j)])];
  return out;
}

}  // namespace photofit
