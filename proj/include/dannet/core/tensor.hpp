#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dannet/core/error.hpp"

namespace dannet {

/// NCHW extent. Every tensor in the library is four-dimensional; vectors and
/// scalars use trailing ones.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" +
           std::to_string(h) + "x" + std::to_string(w);
  }
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(shape.numel(), fill) {}
  BasicTensor(Shape shape, std::vector<T> values)
      : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor storage does not match shape " + shape_.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w + w;
  }
  T& operator()(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  T operator()(int n, int c, int h, int w) const {
    return data_[offset(n, c, h, w)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the (n, c) spatial plane.
  T* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out[i] = static_cast<U>(data_[i]);
    }
    return out;
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() +
                     " vs " + b.str());
  }
}

}  // namespace dannet
