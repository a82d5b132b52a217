// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "photofit/face.hpp"

namespace photofit {

/// 8-bit RGB raster used for PNG export and plots.
struct Rgb8Image {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB
};

Rgb8Image quantize(const FaceImage& img);
FaceImage dequantize(const Rgb8Image& img);

std::vector<std::uint8_t> encode_png(const Rgb8Image& img);
Rgb8Image decode_png(std::span<const std::uint8_t> bytes);

inline std::vector<std::uint8_t> encode_png(const FaceImage& img) { return encode_png(quantize(img)); }

void write_png(const std::filesystem::path& path, const Rgb8Image& img);
inline void write_png(const std::filesystem::path& path, const FaceImage& img) {
  write_png(path, quantize(img));
}
Rgb8Image read_png(const std::filesystem::path& path);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

/// Hex CRC32 of the 8-bit quantized pixels; stable identifier for an image.
std::string image_hash(const FaceImage& img);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace photofit
