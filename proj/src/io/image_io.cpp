// SPDX-License-Identifier: Apache-2.0
#include "photofit/image_io.hpp"

#include <png.h>
#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace photofit {

Rgb8Image quantize(const FaceImage& img) {
  Rgb8Image out{img.width, img.height, std::vector<std::uint8_t>(img.rgb.size())};
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    const float v = std::clamp(img.rgb[i], 0.0f, 1.0f);
    out.pixels[i] = std::uint8_t(std::lround(v * 255.0f));
  }
  return out;
}

FaceImage dequantize(const Rgb8Image& img) {
  FaceImage out{img.width, img.height, std::vector<float>(img.pixels.size())};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out.rgb[i] = float(img.pixels[i]) / 255.0f;
  return out;
}

std::vector<std::uint8_t> encode_png(const Rgb8Image& img) {
  if (img.pixels.size() != std::size_t(img.width) * img.height * 3) {
    throw ConfigError("png: pixel buffer does not match " + std::to_string(img.width) + "x" +
                      std::to_string(img.height));
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(img.width);
  image.height = png_uint_32(img.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png encode: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("png encode: ") + image.message);
  }
  out.resize(size);
  return out;
}

Rgb8Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw std::runtime_error(std::string("png decode: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Rgb8Image out{int(image.width), int(image.height), {}};
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error(std::string("png decode: ") + image.message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Rgb8Image& img) {
  write_file(path, encode_png(img));
}

Rgb8Image read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  std::size_t off = 0;
  while (off < bytes.size()) {
    const uInt chunk = uInt(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return std::uint32_t(crc);
}

std::string image_hash(const FaceImage& img) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc32_of(quantize(img).pixels));
  return buf;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

}  // namespace photofit
