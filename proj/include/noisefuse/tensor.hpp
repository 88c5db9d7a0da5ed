#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "noisefuse/error.hpp"

namespace noisefuse {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<std::size_t>;

/// Product of the extents; 1 for a scalar (empty shape).
std::size_t element_count(std::span<const std::size_t> shape);

std::string shape_to_string(std::span<const std::size_t> shape);

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

/// Dense row-major array of 32- or 64-bit floats.
///
/// The element count always equals the product of the extents. Tensors are
/// plain values: copying copies the payload, and a const Tensor can be shared
/// across threads.
template <class T>
class Tensor {
 public:
  using value_type = T;

  /// Scalar zero.
  Tensor() : data_(1, T{0}) {}

  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(element_count(shape_), T{0}) {}

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) {
      throw Error(Errc::shape_mismatch,
                  "tensor payload has " + std::to_string(data_.size()) +
                      " values but shape " + shape_to_string(shape_) +
                      " needs " + std::to_string(element_count(shape_)));
    }
  }

  static Tensor filled(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static constexpr DType dtype() { return dtype_of<T>(); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }

  bool all_finite() const noexcept {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;
using AnyTensor = std::variant<Tensor32, Tensor64>;

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  std::vector<To> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return Tensor<To>(t.shape(), std::move(out));
}

template <class T>
Tensor<T> as_tensor(const AnyTensor& any) {
  return std::visit([](const auto& t) { return tensor_cast<T>(t); }, any);
}

/// Same dtype, same shape, same bytes. Distinguishes -0 from +0.
template <class T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) noexcept {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) ==
             0;
}

bool bitwise_equal(const AnyTensor& a, const AnyTensor& b) noexcept;

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* context) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::shape_mismatch, std::string(context) + ": shape " +
                                          shape_to_string(a.shape()) +
                                          " vs " + shape_to_string(b.shape()));
  }
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) -
                             static_cast<double>(b[i])));
  }
  return m;
}

template <class T>
double l2_norm(const Tensor<T>& t) {
  double s = 0.0;
  for (T v : t.data()) s += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(s);
}

}  // namespace noisefuse
