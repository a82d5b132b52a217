// SPDX-License-Identifier: Apache-2.0
#include "photofit/plots.hpp"

#include <algorithm>
#include <cmath>

namespace photofit {

Canvas::Canvas(int width, int height, std::array<std::uint8_t, 3> fill) {
  img_.width = width;
  img_.height = height;
  img_.pixels.resize(std::size_t(width) * height * 3);
  for (std::size_t i = 0; i < img_.pixels.size(); i += 3) std::copy(fill.begin(), fill.end(), img_.pixels.begin() + std::ptrdiff_t(i));
}

void Canvas::rect(int x0, int y0, int w, int h, std::array<std::uint8_t, 3> c) {
  for (int y = std::max(0, y0); y < std::min(img_.height, y0 + h); ++y)
    for (int x = std::max(0, x0); x < std::min(img_.width, x0 + w); ++x) {
      std::uint8_t* p = img_.pixels.data() + (std::size_t(y) * img_.width + x) * 3;
      std::copy(c.begin(), c.end(), p);
    }
}

void Canvas::blit(int x0, int y0, const FaceImage& face) {
  const Rgb8Image q = quantize(face);
  for (int y = 0; y < q.height; ++y)
    for (int x = 0; x < q.width; ++x) {
      if (x0 + x < 0 || y0 + y < 0 || x0 + x >= img_.width || y0 + y >= img_.height) continue;
      const std::uint8_t* s = q.pixels.data() + (std::size_t(y) * q.width + x) * 3;
      std::uint8_t* d = img_.pixels.data() + (std::size_t(y0 + y) * img_.width + x0 + x) * 3;
      std::copy(s, s + 3, d);
    }
}

std::array<std::uint8_t, 3> heat(double v) {
  v = std::clamp(v, 0.0, 1.0);
  // white -> dark blue
  return {std::uint8_t(std::lround(255 * (1 - 0.9 * v))), std::uint8_t(std::lround(255 * (1 - 0.75 * v))),
          std::uint8_t(std::lround(255 * (1 - 0.35 * v)))};
}

Rgb8Image heatmap(const std::vector<std::vector<double>>& cells, int cell_px) {
  const int rows = int(cells.size()), cols = rows ? int(cells[0].size()) : 0;
  Canvas c(cols * cell_px + 2, rows * cell_px + 2, {40, 40, 40});
  for (int r = 0; r < rows; ++r)
    for (int k = 0; k < cols; ++k)
      c.rect(1 + k * cell_px, 1 + r * cell_px, cell_px - 1, cell_px - 1, heat(cells[std::size_t(r)][std::size_t(k)]));
  return c.image();
}

Rgb8Image bar_chart(const std::vector<std::vector<double>>& stacks, int bar_px, int height,
                    const std::vector<std::array<std::uint8_t, 3>>& colors) {
  double top = 0.0;
  for (const auto& s : stacks) {
    double sum = 0.0;
    for (double v : s) sum += v;
    top = std::max(top, sum);
  }
  if (top <= 0.0) top = 1.0;
  const int width = int(stacks.size()) * bar_px + 2;
  Canvas c(width, height + 2, {255, 255, 255});
  c.rect(0, height + 1, width, 1, {0, 0, 0});
  for (std::size_t b = 0; b < stacks.size(); ++b) {
    int y = height + 1;
    for (std::size_t j = 0; j < stacks[b].size(); ++j) {
      const int h = int(std::lround(stacks[b][j] / top * height));
      c.rect(1 + int(b) * bar_px, y - h, bar_px - 1, h, colors[j % colors.size()]);
      y -= h;
    }
  }
  return c.image();
}

}  // namespace photofit
