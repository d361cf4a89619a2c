#include "scg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

namespace scg {

namespace {

struct File {
  std::FILE* f = nullptr;
  ~File() {
    if (f) std::fclose(f);
  }
};

std::uint8_t to_u8(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

} // namespace

ImageTensor<float> quantize_u8(const ImageTensor<float>& image) {
  ImageTensor<float> out = image;
  for (Index i = 0; i < out.data().size(); ++i)
    out.data()[i] = float(to_u8(image.data()[i])) / 255.0f;
  return out;
}

void write_png(const std::string& path, const ImageTensor<float>& image) {
  const Index c = image.channels();
  if (c != 1 && c != 3)
    throw ShapeError("write_png: need 1 or 3 channels, got " + std::to_string(c));
  if (image.empty()) throw ShapeError("write_png: empty image");
  File file;
  file.f = std::fopen(path.c_str(), "wb");
  if (!file.f) throw IoError("write_png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("write_png: libpng init failed");
  }
  const Index h = image.height(), w = image.width();
  std::vector<png_byte> row(std::size_t(w * c));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png: libpng error writing " + path);
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x)
      for (Index ch = 0; ch < c; ++ch) row[std::size_t(x * c + ch)] = to_u8(image(ch, y, x));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageTensor<float> read_png(const std::string& path) {
  File file;
  file.f = std::fopen(path.c_str(), "rb");
  if (!file.f) throw IoError("read_png: cannot open " + path);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.f) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError("read_png: " + path + " is not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("read_png: libpng init failed");
  }
  ImageTensor<float> out;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_png: corrupt PNG " + path);
  }
  png_init_io(png, file.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const Index w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const Index c = png_get_channels(png, info);
  if (c != 1 && c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("read_png: unsupported channel count in " + path);
  }
  out = ImageTensor<float>(c, h, w);
  row.resize(png_get_rowbytes(png, info));
  for (Index y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (Index x = 0; x < w; ++x)
      for (Index ch = 0; ch < c; ++ch) out(ch, y, x) = float(row[std::size_t(x * c + ch)]) / 255.0f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

} // namespace scg
