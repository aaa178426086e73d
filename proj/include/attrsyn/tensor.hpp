#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "attrsyn/common.hpp"
#include "attrsyn/rng.hpp"

namespace attrsyn {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense row-major tensor. Copies share the buffer; ops never mutate their
// inputs, so sharing is safe and clone() gives an owned copy when a caller
// does want to write (optimizer updates, image staging).
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape) {
    Tensor t(std::move(shape));
    std::memset(t.data(), 0, sizeof(S) * t.numel());
    return t;
  }

  static Tensor full(std::vector<int> shape, S v) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.data_->at(i) = v;
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<S> values) {
    Tensor t(std::move(shape));
    check(static_cast<int64_t>(values.size()) == t.numel(), "SHAPE_MISMATCH",
          "tensor literal size does not match shape");
    std::copy(values.begin(), values.end(), t.data());
    return t;
  }

  static Tensor gaussian(std::vector<int> shape, Rng& rng, double stddev, double mean = 0.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i)
      t.data_->at(i) = static_cast<S>(rng.normal(mean, stddev));
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(i); }
  int64_t numel() const { return numel_; }
  bool empty() const { return numel_ == 0; }

  S* data() { return data_->data(); }
  const S* data() const { return data_->data(); }
  S& operator[](int64_t i) { return (*data_)[i]; }
  const S& operator[](int64_t i) const { return (*data_)[i]; }

  // 4D (batch, channel, row, col) flat offset
  int64_t idx4(int b, int c, int h, int w) const {
    return ((static_cast<int64_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }
  S& at4(int b, int c, int h, int w) { return (*data_)[idx4(b, c, h, w)]; }
  const S& at4(int b, int c, int h, int w) const { return (*data_)[idx4(b, c, h, w)]; }

  Tensor reshaped(std::vector<int> shape) const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    check(n == numel_, "SHAPE_MISMATCH",
          "reshape from " + shape_str() + " to incompatible element count");
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = numel_;
    t.data_ = data_;
    return t;
  }

  Tensor clone() const {
    Tensor t(shape_);
    std::memcpy(t.data(), data(), sizeof(S) * numel_);
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (int64_t i = 0; i < numel_; ++i)
      if (!std::isfinite(static_cast<double>((*data_)[i]))) return false;
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
  }

  Eigen::Map<RowMat<S>> mat(int rows, int cols) {
    check(static_cast<int64_t>(rows) * cols == numel_, "SHAPE_MISMATCH", "bad matrix view");
    return Eigen::Map<RowMat<S>>(data(), rows, cols);
  }
  Eigen::Map<const RowMat<S>> mat(int rows, int cols) const {
    check(static_cast<int64_t>(rows) * cols == numel_, "SHAPE_MISMATCH", "bad matrix view");
    return Eigen::Map<const RowMat<S>>(data(), rows, cols);
  }

  Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>> arr() {
    return Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(data(), numel_);
  }
  Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> arr() const {
    return Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(data(), numel_);
  }

 private:
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    numel_ = 1;
    for (int d : shape_) {
      check(d >= 0, "SHAPE_MISMATCH", "negative dimension");
      numel_ *= d;
    }
    data_ = std::make_shared<std::vector<S>>(static_cast<size_t>(numel_));
  }

  std::vector<int> shape_;
  int64_t numel_ = 0;
  std::shared_ptr<std::vector<S>> data_;
};

template <typename S, typename T>
Tensor<T> cast_tensor(const Tensor<S>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = static_cast<T>(a[i]);
  return out;
}

}  // namespace attrsyn
