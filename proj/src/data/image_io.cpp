#include "dannet/data/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

namespace dannet::data {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Raster read_png(const std::filesystem::path& path) {
  File fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialization failed");
  }
  Raster out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("cannot decode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) {
    rows[y] = out.pixels.data() + static_cast<std::size_t>(y) * out.width * out.channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png(const std::filesystem::path& path, const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw DataError("write_png: 1 or 3 channels only");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  File fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot write image " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialization failed");
  }
  std::vector<png_bytep> rows(r.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("cannot encode PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, r.width, r.height, 8,
               r.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < r.height; ++y) {
    rows[y] = const_cast<png_bytep>(r.pixels.data()) +
              static_cast<std::size_t>(y) * r.width * r.channels;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor raster_to_tensor(const Raster& r) {
  if (r.channels != 3) throw DataError("expected an RGB image");
  Tensor t(Shape{1, 3, r.height, r.width});
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        t(0, c, y, x) = r.pixels[(static_cast<std::size_t>(y) * r.width + x) * 3 + c] / 255.0f;
      }
    }
  }
  return t;
}

Raster tensor_to_raster(const Tensor& t, int b) {
  const Shape s = t.shape();
  if (s.c != 3) throw ShapeError("tensor_to_raster: expected 3 channels");
  Raster r{s.w, s.h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(s.w) * s.h * 3)};
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(t(b, c, y, x), 0.0f, 1.0f);
        r.pixels[(static_cast<std::size_t>(y) * s.w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return r;
}

LabelBatch raster_to_labels(const Raster& r) {
  if (r.channels != 1) throw DataError("label maps must be single-channel");
  LabelBatch l(1, r.height, r.width);
  for (std::size_t i = 0; i < r.pixels.size(); ++i) l.data[i] = r.pixels[i];
  return l;
}

Raster labels_to_raster(const LabelBatch& l, int b) {
  Raster r{l.w, l.h, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(l.w) * l.h)};
  const std::size_t plane = static_cast<std::size_t>(l.h) * l.w;
  for (std::size_t i = 0; i < plane; ++i) {
    r.pixels[i] = static_cast<std::uint8_t>(l.data[b * plane + i]);
  }
  return r;
}

}  // namespace dannet::data
