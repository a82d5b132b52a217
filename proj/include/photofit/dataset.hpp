// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "photofit/face.hpp"

namespace photofit {

/// Random faces with their renders, as used to train the encoder and decoder.
struct FaceDataset {
  std::vector<SliderVector> sliders;
  Tensor images;   // [N,S,S,3]
  Tensor targets;  // [N,K_r] reconstructable sliders
  Tensor inputs;   // [N,K] every slider (decoder input)

  int size() const { return int(sliders.size()); }
};

FaceDataset make_face_dataset(int n, std::uint64_t seed, int image_size = 64);

/// Full slider vectors as [N,K].
Tensor slider_matrix(std::span<const SliderVector> sliders);

}  // namespace photofit
