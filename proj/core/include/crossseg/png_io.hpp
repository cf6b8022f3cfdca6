#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossseg/tensor.hpp"

namespace crossseg {

// Interleaved 8-bit pixel buffer, row-major, channels fastest.
struct PngImage {
  index_t height = 0;
  index_t width = 0;
  index_t channels = 0;  // 1 (gray) or 3 (rgb)
  std::vector<std::uint8_t> data;

  std::uint8_t& at(index_t y, index_t x, index_t c) {
    return data[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t at(index_t y, index_t x, index_t c) const {
    return data[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
};

// Decodes to 8-bit gray or rgb (palette expanded, 16-bit narrowed, alpha stripped).
PngImage read_png(const std::string& path);
void write_png(const std::string& path, const PngImage& img);

// [0,255] u8 rgb -> [3,H,W] float in [0,1]
Tensor<float> image_from_png(const PngImage& img);
// [3,H,W] float -> rgb u8, values clamped to [0,1] then scaled
PngImage image_to_png(const Tensor<float>& image);

// 1-channel u8 -> [H,W] int32, raw label values
Tensor<std::int32_t> mask_from_png(const PngImage& img);
// [H,W] int32 -> 1-channel u8, raw label values
PngImage mask_to_png(const Tensor<std::int32_t>& mask);

}  // namespace crossseg
