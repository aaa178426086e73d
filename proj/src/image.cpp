#include "attrsyn/image.hpp"

#include <png.h>

#include <cstdio>
#include <vector>

namespace attrsyn {

namespace {

struct FileCloser {
  FILE* f = nullptr;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace

Tensor<float> read_png(const std::string& path, int want_channels) {
  check(want_channels == 1 || want_channels == 3, "BAD_ARGS",
        "read_png supports 1 or 3 channels");
  FileCloser fc;
  fc.f = std::fopen(path.c_str(), "rb");
  check(fc.f != nullptr, "IO_ERROR", "cannot open " + path);

  png_byte sig[8];
  check(std::fread(sig, 1, 8, fc.f) == 8 && !png_sig_cmp(sig, 0, 8), "IO_ERROR",
        path + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "IO_ERROR", "png init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail("IO_ERROR", "png init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("IO_ERROR", "failed to decode " + path);
  }
  png_init_io(png, fc.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  int color = png_get_color_type(png, info);
  if (want_channels == 3 && (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA))
    png_set_gray_to_rgb(png);
  if (want_channels == 1 && (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
                             color == PNG_COLOR_TYPE_PALETTE))
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  int h = static_cast<int>(png_get_image_height(png, info));
  int w = static_cast<int>(png_get_image_width(png, info));
  int ch = static_cast<int>(png_get_channels(png, info));
  if (ch != want_channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("IO_ERROR", path + ": decoded channel count " + std::to_string(ch) +
                         " != " + std::to_string(want_channels));
  }

  std::vector<png_byte> rowbuf(static_cast<size_t>(w) * ch * h);
  std::vector<png_bytep> rows(h);
  for (int i = 0; i < h; ++i) rows[i] = rowbuf.data() + static_cast<size_t>(i) * w * ch;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor<float> out = Tensor<float>::zeros({want_channels, h, w});
  for (int c = 0; c < want_channels; ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        out[(static_cast<int64_t>(c) * h + i) * w + j] =
            static_cast<float>(rowbuf[(static_cast<size_t>(i) * w + j) * ch + c]);
  return out;
}

void write_png(const std::string& path, const Tensor<float>& chw) {
  check(chw.ndim() == 3, "SHAPE_MISMATCH", "write_png wants (C,H,W)");
  int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  check(c == 1 || c == 3, "BAD_ARGS", "write_png supports 1 or 3 channels");

  FileCloser fc;
  fc.f = std::fopen(path.c_str(), "wb");
  check(fc.f != nullptr, "IO_ERROR", "cannot write " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "IO_ERROR", "png init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail("IO_ERROR", "png init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("IO_ERROR", "failed to encode " + path);
  }
  png_init_io(png, fc.f);
  png_set_IHDR(png, info, w, h, 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_byte> row(static_cast<size_t>(w) * c);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j)
      for (int k = 0; k < c; ++k) {
        float v = chw[(static_cast<int64_t>(k) * h + i) * w + j];
        v = std::min(255.0f, std::max(0.0f, v));
        row[static_cast<size_t>(j) * c + k] = static_cast<png_byte>(v + 0.5f);
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor<float> resize_bilinear(const Tensor<float>& chw, int oh, int ow) {
  check(chw.ndim() == 3, "SHAPE_MISMATCH", "resize wants (C,H,W)");
  int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  check(oh > 0 && ow > 0, "BAD_ARGS", "resize target must be positive");
  if (oh == h && ow == w) return chw.clone();
  Tensor<float> out = Tensor<float>::zeros({c, oh, ow});
  float sy = static_cast<float>(h) / oh, sx = static_cast<float>(w) / ow;
  for (int i = 0; i < oh; ++i) {
    float fy = (i + 0.5f) * sy - 0.5f;
    int y0 = static_cast<int>(std::floor(fy));
    float wy = fy - y0;
    int y1 = std::min(h - 1, std::max(0, y0 + 1));
    y0 = std::min(h - 1, std::max(0, y0));
    for (int j = 0; j < ow; ++j) {
      float fx = (j + 0.5f) * sx - 0.5f;
      int x0 = static_cast<int>(std::floor(fx));
      float wx = fx - x0;
      int x1 = std::min(w - 1, std::max(0, x0 + 1));
      x0 = std::min(w - 1, std::max(0, x0));
      for (int k = 0; k < c; ++k) {
        const float* p = chw.data() + static_cast<int64_t>(k) * h * w;
        float top = p[y0 * w + x0] * (1 - wx) + p[y0 * w + x1] * wx;
        float bot = p[y1 * w + x0] * (1 - wx) + p[y1 * w + x1] * wx;
        out[(static_cast<int64_t>(k) * oh + i) * ow + j] = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

}  // namespace attrsyn
