#include "odetex/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace odetex::io {

using ad::Tensor;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("read_png: cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("read_png: init failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("read_png: init failure");
  }
  std::vector<png_bytep> rows;
  std::vector<png_byte> data;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: decode error in " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  data.resize(rowbytes * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = data.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<float> vals(3 * plane);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        vals[c * plane + y * static_cast<std::size_t>(w) + x] =
            data[y * rowbytes + 3 * static_cast<std::size_t>(x) + c] / 255.0f;
  return Tensor::constant({3, h, w}, std::move(vals));
}

void write_png(const std::string& path, const Tensor& img) {
  const auto& s = img.shape();
  if (s.size() != 3 || (s[0] != 3 && s[0] != 1))
    throw std::invalid_argument("write_png: expected [3,H,W] or [1,H,W]");
  const int h = s[1], w = s[2];
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("write_png: cannot open " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("write_png: init failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("write_png: init failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: encode error for " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src = s[0] == 3 ? c : 0;
        const float v =
            img.values()[src * plane + y * static_cast<std::size_t>(w) + x];
        row[3 * static_cast<std::size_t>(x) + c] = static_cast<png_byte>(
            std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor center_crop(const Tensor& img, int out_h, int out_w) {
  const auto& s = img.shape();
  if (s.size() != 3) throw std::invalid_argument("center_crop: expected [C,H,W]");
  if (out_h > s[1] || out_w > s[2])
    throw std::invalid_argument("center_crop: crop larger than image");
  const int y0 = (s[1] - out_h) / 2, x0 = (s[2] - out_w) / 2;
  std::vector<int> idx(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      idx[y * out_w + x] = (y0 + y) * s[2] + (x0 + x);
  return gather_spatial(img, idx, out_h, out_w);
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
  const auto& s = img.shape();
  if (s.size() != 3) throw std::invalid_argument("resize: expected [C,H,W]");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: bad size");
  const int c = s[0], ih = s[1], iw = s[2];
  if (ih == out_h && iw == out_w) return img;
  const std::size_t iplane = static_cast<std::size_t>(ih) * iw;
  const std::size_t oplane = static_cast<std::size_t>(out_h) * out_w;
  std::vector<float> out(static_cast<std::size_t>(c) * oplane);
  // Half-pixel centers, edges clamped.
  for (int y = 0; y < out_h; ++y) {
    const double sy = (y + 0.5) * ih / out_h - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, ih - 1);
    const int y1 = std::min(y0 + 1, ih - 1);
    const double fy = std::clamp(sy - y0, 0.0, 1.0);
    for (int x = 0; x < out_w; ++x) {
      const double sx = (x + 0.5) * iw / out_w - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, iw - 1);
      const int x1 = std::min(x0 + 1, iw - 1);
      const double fx = std::clamp(sx - x0, 0.0, 1.0);
      for (int ch = 0; ch < c; ++ch) {
        const float* p = img.values().data() + ch * iplane;
        const double top = p[y0 * iw + x0] * (1 - fx) + p[y0 * iw + x1] * fx;
        const double bot = p[y1 * iw + x0] * (1 - fx) + p[y1 * iw + x1] * fx;
        out[ch * oplane + y * static_cast<std::size_t>(out_w) + x] =
            static_cast<float>(top * (1 - fy) + bot * fy);
      }
    }
  }
  return Tensor::constant({c, out_h, out_w}, std::move(out));
}

}  // namespace odetex::io
