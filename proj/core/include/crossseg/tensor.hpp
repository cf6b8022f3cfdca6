#pragma once

#include <cmath>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "crossseg/common.hpp"

namespace crossseg {

using Shape = std::vector<index_t>;

inline index_t shape_numel(const Shape& s) {
  index_t n = 1;
  for (index_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major N-d array with value semantics.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    for (index_t d : shape_) CROSSSEG_CHECK(d >= 0, "Tensor: negative dim in " << shape_str(shape_));
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), T(0));
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    CROSSSEG_CHECK(static_cast<index_t>(data_.size()) == shape_numel(shape_),
                   "Tensor: data size " << data_.size() << " does not match shape " << shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  index_t ndim() const { return static_cast<index_t>(shape_.size()); }
  index_t dim(index_t i) const { return shape_[static_cast<std::size_t>(i)]; }
  index_t numel() const { return static_cast<index_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](index_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](index_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(index_t i) { return data_[static_cast<std::size_t>(i)]; }
  T& at(index_t i, index_t j) { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
  T& at(index_t i, index_t j, index_t k) {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  T& at(index_t i, index_t j, index_t k, index_t l) {
    return data_[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  const T& at(index_t i) const { return data_[static_cast<std::size_t>(i)]; }
  const T& at(index_t i, index_t j) const { return data_[static_cast<std::size_t>(i * shape_[1] + j)]; }
  const T& at(index_t i, index_t j, index_t k) const {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  const T& at(index_t i, index_t j, index_t k, index_t l) const {
    return data_[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  Tensor reshaped(Shape new_shape) const& {
    CROSSSEG_CHECK(shape_numel(new_shape) == numel(),
                   "reshape: cannot view " << shape_str(shape_) << " as " << shape_str(new_shape));
    Tensor out = *this;
    out.shape_ = std::move(new_shape);
    return out;
  }

  Tensor reshaped(Shape new_shape) && {
    CROSSSEG_CHECK(shape_numel(new_shape) == numel(),
                   "reshape: cannot view " << shape_str(shape_) << " as " << shape_str(new_shape));
    shape_ = std::move(new_shape);
    return std::move(*this);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  T min() const {
    CROSSSEG_CHECK(!empty(), "min of empty tensor");
    return *std::min_element(data_.begin(), data_.end());
  }
  T max() const {
    CROSSSEG_CHECK(!empty(), "max of empty tensor");
    return *std::max_element(data_.begin(), data_.end());
  }

  // Double accumulation keeps float sums accurate enough for logging.
  double sum() const {
    double acc = 0.0;
    for (const T& v : data_) acc += static_cast<double>(v);
    return acc;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (index_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using MaskBatch = Tensor<std::int32_t>;  // [B,H,W], values in {0,1,2}

}  // namespace crossseg
