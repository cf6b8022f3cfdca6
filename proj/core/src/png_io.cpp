#include "crossseg/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace crossseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

PngImage read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  CROSSSEG_CHECK_RT(fp != nullptr, "read_png: cannot open '" << path << "'");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  CROSSSEG_CHECK_RT(png, "read_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw RuntimeError("read_png: png_create_info_struct failed");
  }
  std::vector<std::uint8_t> data;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw RuntimeError("read_png: libpng failed decoding '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_byte color = png_get_color_type(png, info);
  png_byte depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_strip_16(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  PngImage out;
  out.height = static_cast<index_t>(png_get_image_height(png, info));
  out.width = static_cast<index_t>(png_get_image_width(png, info));
  out.channels = static_cast<index_t>(png_get_channels(png, info));
  if (out.channels != 1 && out.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw RuntimeError("read_png: '" + path + "' has unsupported channel count " +
                       std::to_string(out.channels));
  }
  index_t stride = out.width * out.channels;
  data.resize(static_cast<std::size_t>(out.height * stride));
  rows.resize(static_cast<std::size_t>(out.height));
  for (index_t y = 0; y < out.height; ++y)
    rows[static_cast<std::size_t>(y)] = data.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  out.data = std::move(data);
  return out;
}

void write_png(const std::string& path, const PngImage& img) {
  CROSSSEG_CHECK(img.channels == 1 || img.channels == 3, "write_png: channels must be 1 or 3");
  CROSSSEG_CHECK(img.height > 0 && img.width > 0, "write_png: empty image");
  CROSSSEG_CHECK(img.data.size() == static_cast<std::size_t>(img.height * img.width * img.channels),
                 "write_png: data size mismatch");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  CROSSSEG_CHECK_RT(fp != nullptr, "write_png: cannot open '" << path << "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  CROSSSEG_CHECK_RT(png, "write_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw RuntimeError("write_png: png_create_info_struct failed");
  }
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw RuntimeError("write_png: libpng failed encoding '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  index_t stride = img.width * img.channels;
  rows.resize(static_cast<std::size_t>(img.height));
  for (index_t y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(img.data.data() + y * stride);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor<float> image_from_png(const PngImage& img) {
  CROSSSEG_CHECK(img.channels == 3 || img.channels == 1,
                 "image_from_png: expected 1 or 3 channels, got " << img.channels);
  Tensor<float> out({3, img.height, img.width});
  for (index_t y = 0; y < img.height; ++y)
    for (index_t x = 0; x < img.width; ++x)
      for (index_t c = 0; c < 3; ++c)
        out.at(c, y, x) = static_cast<float>(img.at(y, x, img.channels == 3 ? c : 0)) / 255.0f;
  return out;
}

PngImage image_to_png(const Tensor<float>& image) {
  CROSSSEG_CHECK(image.ndim() == 3 && image.dim(0) == 3, "image_to_png: expected [3,H,W]");
  PngImage out;
  out.height = image.dim(1);
  out.width = image.dim(2);
  out.channels = 3;
  out.data.resize(static_cast<std::size_t>(out.height * out.width * 3));
  for (index_t y = 0; y < out.height; ++y)
    for (index_t x = 0; x < out.width; ++x)
      for (index_t c = 0; c < 3; ++c) {
        float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return out;
}

Tensor<std::int32_t> mask_from_png(const PngImage& img) {
  CROSSSEG_CHECK(img.channels == 1, "mask_from_png: masks must be single-channel, got " << img.channels);
  Tensor<std::int32_t> out({img.height, img.width});
  for (index_t y = 0; y < img.height; ++y)
    for (index_t x = 0; x < img.width; ++x) out.at(y, x) = img.at(y, x, 0);
  return out;
}

PngImage mask_to_png(const Tensor<std::int32_t>& mask) {
  CROSSSEG_CHECK(mask.ndim() == 2, "mask_to_png: expected [H,W]");
  PngImage out;
  out.height = mask.dim(0);
  out.width = mask.dim(1);
  out.channels = 1;
  out.data.resize(static_cast<std::size_t>(out.height * out.width));
  for (index_t y = 0; y < out.height; ++y)
    for (index_t x = 0; x < out.width; ++x) {
      std::int32_t v = mask.at(y, x);
      CROSSSEG_CHECK(v >= 0 && v <= 255, "mask_to_png: label " << v << " not representable in 8 bits");
      out.at(y, x, 0) = static_cast<std::uint8_t>(v);
    }
  return out;
}

}  // namespace crossseg
