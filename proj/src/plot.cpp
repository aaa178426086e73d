#include "attrsyn/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "attrsyn/common.hpp"

namespace attrsyn {

namespace {

struct Glyph {
  char ch;
  uint8_t rows[7];  // 5 bits per row, MSB left
};

const Glyph kFont[] = {
    {'a', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'b', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'c', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'d', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
    {'e', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'f', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'g', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'h', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'i', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'j', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'k', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'l', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'m', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'n', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'o', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'p', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'r', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'s', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'t', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'u', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'v', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'w', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
    {'x', {0x11, 0x0A, 0x04, 0x04, 0x04, 0x0A, 0x11}},
    {'y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
    {'z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
    {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {'%', {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13}},
    {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};

const uint8_t* glyph_rows(char c) {
  char lc = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (const Glyph& g : kFont)
    if (g.ch == lc) return g.rows;
  return nullptr;
}

void put_pixel(Tensor<float>& canvas, int row, int col, float r, float g, float b) {
  int h = canvas.dim(1), w = canvas.dim(2);
  if (row < 0 || row >= h || col < 0 || col >= w) return;
  canvas[static_cast<int64_t>(0) * h * w + row * static_cast<int64_t>(w) + col] = r;
  canvas[static_cast<int64_t>(1) * h * w + row * static_cast<int64_t>(w) + col] = g;
  canvas[static_cast<int64_t>(2) * h * w + row * static_cast<int64_t>(w) + col] = b;
}

std::string compact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

Tensor<float> blank_canvas(int h, int w, float r, float g, float b) {
  check(h > 0 && w > 0, "BAD_ARGS", "canvas dimensions must be positive");
  Tensor<float> c = Tensor<float>::zeros({3, h, w});
  for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
    c[i] = r;
    c[static_cast<int64_t>(h) * w + i] = g;
    c[2 * static_cast<int64_t>(h) * w + i] = b;
  }
  return c;
}

int text_width(const std::string& text) { return static_cast<int>(text.size()) * 6; }

void draw_text(Tensor<float>& canvas, int row, int col, const std::string& text, float r,
               float g, float b) {
  int x = col;
  for (char c : text) {
    const uint8_t* rows = glyph_rows(c);
    if (rows)
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 5; ++j)
          if (rows[i] & (1 << (4 - j))) put_pixel(canvas, row + i, x + j, r, g, b);
    x += 6;
  }
}

void draw_line(Tensor<float>& canvas, float r0, float c0, float r1, float c1, float r, float g,
               float b) {
  float dr = r1 - r0, dc = c1 - c0;
  int steps = static_cast<int>(std::max(std::abs(dr), std::abs(dc))) + 1;
  for (int i = 0; i <= steps; ++i) {
    float t = static_cast<float>(i) / steps;
    put_pixel(canvas, static_cast<int>(std::lround(r0 + t * dr)),
              static_cast<int>(std::lround(c0 + t * dc)), r, g, b);
  }
}

Tensor<float> render_line_chart(const std::string& title, const std::vector<double>& xs,
                                const std::vector<double>& ys, int w, int h) {
  check(!xs.empty() && xs.size() == ys.size(), "BAD_ARGS",
        "chart needs matching nonempty x and y series");
  check(w >= 120 && h >= 80, "BAD_ARGS", "chart canvas too small");

  Tensor<float> canvas = blank_canvas(h, w);
  int top = 16, bottom = h - 20, left = 64, right = w - 10;

  draw_text(canvas, 4, 6, title, 30, 30, 30);
  draw_line(canvas, static_cast<float>(top), static_cast<float>(left),
            static_cast<float>(bottom), static_cast<float>(left), 90, 90, 90);
  draw_line(canvas, static_cast<float>(bottom), static_cast<float>(left),
            static_cast<float>(bottom), static_cast<float>(right), 90, 90, 90);

  double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0];
  for (size_t i = 1; i < xs.size(); ++i) {
    xmin = std::min(xmin, xs[i]);
    xmax = std::max(xmax, xs[i]);
    ymin = std::min(ymin, ys[i]);
    ymax = std::max(ymax, ys[i]);
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) {
    double pad = ymin == 0 ? 1.0 : std::abs(ymin) * 0.1;
    ymin -= pad;
    ymax += pad;
  }

  draw_text(canvas, top - 3, 4, compact(ymax), 90, 90, 90);
  draw_text(canvas, bottom - 4, 4, compact(ymin), 90, 90, 90);
  draw_text(canvas, bottom + 6, left, compact(xmin), 90, 90, 90);
  std::string xlab = compact(xmax);
  draw_text(canvas, bottom + 6, right - text_width(xlab), xlab, 90, 90, 90);

  auto to_col = [&](double x) {
    return left + (x - xmin) / (xmax - xmin) * (right - left);
  };
  auto to_row = [&](double y) {
    return bottom - (y - ymin) / (ymax - ymin) * (bottom - top);
  };

  if (xs.size() == 1) {
    put_pixel(canvas, static_cast<int>(to_row(ys[0])), static_cast<int>(to_col(xs[0])), 200, 40,
              40);
  } else {
    for (size_t i = 1; i < xs.size(); ++i)
      draw_line(canvas, static_cast<float>(to_row(ys[i - 1])),
                static_cast<float>(to_col(xs[i - 1])), static_cast<float>(to_row(ys[i])),
                static_cast<float>(to_col(xs[i])), 200, 40, 40);
  }
  return canvas;
}

Tensor<float> tile_charts(const std::vector<Tensor<float>>& panels, int cols) {
  check(!panels.empty(), "BAD_ARGS", "nothing to tile");
  check(cols >= 1, "BAD_ARGS", "tile columns must be positive");
  int ph = panels[0].dim(1), pw = panels[0].dim(2);
  for (const auto& p : panels)
    check(p.ndim() == 3 && p.dim(0) == 3 && p.dim(1) == ph && p.dim(2) == pw, "SHAPE_MISMATCH",
          "all panels must share one size");
  int rows = (static_cast<int>(panels.size()) + cols - 1) / cols;
  Tensor<float> out = blank_canvas(rows * ph, cols * pw);
  int H = rows * ph, W = cols * pw;
  for (size_t i = 0; i < panels.size(); ++i) {
    int r0 = static_cast<int>(i) / cols * ph;
    int c0 = static_cast<int>(i) % cols * pw;
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < ph; ++r)
        for (int x = 0; x < pw; ++x)
          out[(static_cast<int64_t>(c) * H + r0 + r) * W + c0 + x] =
              panels[i][(static_cast<int64_t>(c) * ph + r) * pw + x];
  }
  return out;
}

}  // namespace attrsyn
