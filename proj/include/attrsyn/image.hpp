#pragma once

#include <string>

#include "attrsyn/tensor.hpp"

namespace attrsyn {

// Planar (C,H,W) float images with values in [0,255]. PNG I/O is 8-bit;
// channels is 1 (gray) or 3 (RGB).

Tensor<float> read_png(const std::string& path, int want_channels);
void write_png(const std::string& path, const Tensor<float>& chw);

Tensor<float> resize_bilinear(const Tensor<float>& chw, int oh, int ow);

}  // namespace attrsyn
