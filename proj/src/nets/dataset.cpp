// SPDX-License-Identifier: Apache-2.0
#include "photofit/dataset.hpp"

#include <cstring>

#include "photofit/encoder.hpp"

namespace photofit {

FaceDataset make_face_dataset(int n, std::uint64_t seed, int image_size) {
  if (n <= 0) throw ConfigError("dataset size must be positive");
  Rng rng(seed);
  FaceDataset d;
  d.sliders.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) d.sliders.push_back(sample_sliders(rng));
  d.images = Tensor({n, image_size, image_size, 3});
  const std::size_t per = std::size_t(image_size) * image_size * 3;
  for (int i = 0; i < n; ++i) {
    FaceImage img = render_face(d.sliders[std::size_t(i)], image_size);
    std::memcpy(d.images.data() + std::size_t(i) * per, img.rgb.data(), per * sizeof(float));
  }
  d.targets = slider_targets(d.sliders);
  d.inputs = slider_matrix(d.sliders);
  return d;
}

Tensor slider_matrix(std::span<const SliderVector> sliders) {
  if (sliders.empty()) throw ConfigError("empty slider list");
  const int k = int(sliders[0].values.size());
  Tensor out({int(sliders.size()), k});
  for (std::size_t i = 0; i < sliders.size(); ++i) {
    std::memcpy(out.data() + i * std::size_t(k), sliders[i].values.data(), std::size_t(k) * sizeof(float));
  }
  return out;
}

}  // namespace photofit
