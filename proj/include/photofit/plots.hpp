// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "photofit/image_io.hpp"

namespace photofit {

/// Minimal raster for result figures.
class Canvas {
 public:
  Canvas(int width, int height, std::array<std::uint8_t, 3> fill);
  void rect(int x0, int y0, int w, int h, std::array<std::uint8_t, 3> c);
  void blit(int x0, int y0, const FaceImage& face);
  const Rgb8Image& image() const { return img_; }

 private:
  Rgb8Image img_;
};

/// White-to-blue ramp over [0,1].
std::array<std::uint8_t, 3> heat(double v);
Rgb8Image heatmap(const std::vector<std::vector<double>>& cells, int cell_px = 24);
/// One bar per entry, stacked segments coloured in order.
Rgb8Image bar_chart(const std::vector<std::vector<double>>& stacks, int bar_px, int height,
                    const std::vector<std::array<std::uint8_t, 3>>& colors);

}  // namespace photofit
