#pragma once

#include <string>
#include <vector>

#include "attrsyn/tensor.hpp"

namespace attrsyn {

// All canvases are (3,H,W) with values in [0,255].

Tensor<float> blank_canvas(int h, int w, float r = 255, float g = 255, float b = 255);

// 5x7 bitmap glyphs; unknown characters render as blanks.
void draw_text(Tensor<float>& canvas, int row, int col, const std::string& text, float r,
               float g, float b);
int text_width(const std::string& text);

void draw_line(Tensor<float>& canvas, float r0, float c0, float r1, float c1, float r, float g,
               float b);

// Single titled panel with axes, y-range labels and a polyline through the
// series. Degenerate ranges are padded so a flat series still plots.
Tensor<float> render_line_chart(const std::string& title, const std::vector<double>& xs,
                                const std::vector<double>& ys, int w = 360, int h = 260);

// Row-major grid of equally sized panels.
Tensor<float> tile_charts(const std::vector<Tensor<float>>& panels, int cols);

}  // namespace attrsyn
