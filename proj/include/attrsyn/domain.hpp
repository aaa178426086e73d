#pragma once

#include <string>
#include <vector>

#include "attrsyn/tensor.hpp"

namespace attrsyn {

// Category layout for a dataset: ordered attribute names, optional
// mutually-exclusive groups (exactly one active per group), channel counts
// for the main image and the side conditioning input.
struct DomainSpec {
  std::vector<std::string> attribute_names;
  std::vector<std::vector<int>> groups;  // index lists into attribute_names
  int image_channels = 3;
  int side_channels = 0;

  int n_y() const { return static_cast<int>(attribute_names.size()); }

  int index_of(const std::string& name) const {
    for (size_t i = 0; i < attribute_names.size(); ++i)
      if (attribute_names[i] == name) return static_cast<int>(i);
    std::string known;
    for (const auto& n : attribute_names) known += (known.empty() ? "" : ", ") + n;
    fail("UNKNOWN_ATTRIBUTE", "unknown attribute '" + name + "' (known: " + known + ")");
  }

  void validate() const {
    check(n_y() >= 1, "BAD_CONFIG", "at least one attribute required");
    check(image_channels >= 1, "BAD_CONFIG", "image_channels must be >= 1");
    check(side_channels >= 0, "BAD_CONFIG", "side_channels must be >= 0");
    for (size_t i = 0; i < attribute_names.size(); ++i)
      for (size_t j = i + 1; j < attribute_names.size(); ++j)
        check(attribute_names[i] != attribute_names[j], "BAD_CONFIG",
              "duplicate attribute name " + attribute_names[i]);
    std::vector<int> seen(attribute_names.size(), 0);
    for (const auto& g : groups) {
      check(!g.empty(), "BAD_CONFIG", "empty group");
      for (int idx : g) {
        check(idx >= 0 && idx < n_y(), "BAD_CONFIG", "group index out of range");
        check(!seen[idx]++, "BAD_CONFIG",
              "attribute " + attribute_names[idx] + " in more than one group");
      }
    }
  }
};

struct AttributeVector {
  std::vector<int> values;

  void validate(const DomainSpec& spec) const {
    check(static_cast<int>(values.size()) == spec.n_y(), "BAD_CONFIG",
          "attribute vector length " + std::to_string(values.size()) + " vs n_y " +
              std::to_string(spec.n_y()));
    for (int v : values)
      check(v == 0 || v == 1, "BAD_CONFIG", "attribute entries must be 0 or 1");
    for (const auto& g : spec.groups) {
      int on = 0;
      for (int idx : g) on += values[idx];
      check(on == 1, "BAD_CONFIG", "exactly one attribute per group must be set");
    }
  }

  bool operator==(const AttributeVector& o) const { return values == o.values; }
};

inline AttributeVector encode_attributes(const std::vector<std::string>& names_on,
                                         const DomainSpec& spec) {
  AttributeVector y;
  y.values.assign(spec.n_y(), 0);
  for (const auto& n : names_on) y.values[spec.index_of(n)] = 1;
  return y;
}

// channel c constant at y[c] over an h x w grid
template <typename S>
Tensor<S> replicate_attributes(const AttributeVector& y, int h, int w) {
  check(h > 0 && w > 0, "SHAPE_MISMATCH", "replicate_attributes needs positive dims");
  int n = static_cast<int>(y.values.size());
  Tensor<S> out = Tensor<S>::zeros({n, h, w});
  for (int c = 0; c < n; ++c) {
    S v = static_cast<S>(y.values[c]);
    S* p = out.data() + static_cast<int64_t>(c) * h * w;
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) p[i] = v;
  }
  return out;
}

template <typename S>
Tensor<S> replicate_attributes_batch(const std::vector<AttributeVector>& ys, int h, int w) {
  check(!ys.empty(), "SHAPE_MISMATCH", "empty attribute batch");
  int n = static_cast<int>(ys[0].values.size());
  Tensor<S> out = Tensor<S>::zeros({static_cast<int>(ys.size()), n, h, w});
  for (size_t b = 0; b < ys.size(); ++b) {
    Tensor<S> one = replicate_attributes<S>(ys[b], h, w);
    std::memcpy(out.data() + static_cast<int64_t>(b) * n * h * w, one.data(),
                sizeof(S) * n * h * w);
  }
  return out;
}

// Images live in [-1,1]; this is the only pixel<->real conversion.
template <typename S>
Tensor<S> normalize_image(const Tensor<S>& pixels) {
  Tensor<S> out = Tensor<S>::zeros(pixels.shape());
  for (int64_t i = 0; i < pixels.numel(); ++i) {
    S p = pixels[i];
    check(p >= S(0) && p <= S(255), "DATA_ERROR",
          "pixel value " + std::to_string(static_cast<double>(p)) + " outside [0,255]");
    out[i] = p / S(127.5) - S(1);
  }
  return out;
}

template <typename S>
Tensor<S> denormalize_image(const Tensor<S>& v) {
  Tensor<S> out = Tensor<S>::zeros(v.shape());
  for (int64_t i = 0; i < v.numel(); ++i) {
    S p = (v[i] + S(1)) * S(127.5);
    out[i] = std::min(S(255), std::max(S(0), p));
  }
  return out;
}

struct ImageBatch {
  Tensor<float> data;  // (B, C, H, W) in [-1, 1]

  void validate() const {
    check(data.ndim() == 4, "SHAPE_MISMATCH", "image batch must be 4D");
    for (int64_t i = 0; i < data.numel(); ++i)
      check(data[i] >= -1.0f && data[i] <= 1.0f, "DATA_ERROR",
            "image value outside [-1,1]");
  }
};

struct ConditionedSample {
  Tensor<float> image;  // (C, H, W)
  Tensor<float> side;   // (side_channels, H, W); empty when side_channels == 0
  AttributeVector attrs;
};

struct LatentCode {
  Tensor<float> data;  // (B, n, H/16, W/16)
};

struct LossWeights {
  double lambda_bi = 10.0;
  double lambda_cls = 1.0;
  double lambda_id = 10.0;
  double lambda_p = 10.0;
  double lambda_gp = 10.0;

  void validate() const {
    check(lambda_bi >= 0 && lambda_cls >= 0 && lambda_id >= 0 && lambda_p >= 0 &&
              lambda_gp >= 0,
          "BAD_CONFIG", "loss weights must be nonnegative");
  }
};

struct OptimizerConfig {
  double base_lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int decay_start_epoch = 100;
  int total_epochs = 200;
  int d_steps_per_g = 5;
  int batch_size = 8;
  bool augment_flips = true;

  void validate() const {
    check(base_lr > 0, "BAD_CONFIG", "base_lr must be positive");
    check(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "BAD_CONFIG",
          "betas must lie in [0,1)");
    check(decay_start_epoch < total_epochs, "BAD_CONFIG",
          "decay_start_epoch must precede total_epochs");
    check(d_steps_per_g >= 1, "BAD_CONFIG", "d_steps_per_g must be >= 1");
    check(batch_size >= 1, "BAD_CONFIG", "batch_size must be >= 1");
  }
};

}  // namespace attrsyn
