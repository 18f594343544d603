#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace metabit {

using Shape = std::vector<std::int64_t>;

enum class DType : std::uint8_t { kFloat32, kFloat64 };

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

// Calls f with a value of the C++ scalar type matching `dtype`.
template <typename F>
decltype(auto) visit_dtype(DType dtype, F&& f) {
  if (dtype == DType::kFloat64) return f(double{});
  return f(float{});
}

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::kFloat32 : DType::kFloat64;
}

// Dense row-major array. Images use (frame, channel, height, width) order.
// A rank-0 tensor is a scalar holding one element.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, DType dtype = DType::kFloat32);

  static Tensor zeros(Shape shape, DType dtype = DType::kFloat32);
  static Tensor full(Shape shape, double value, DType dtype = DType::kFloat32);
  static Tensor scalar(double value, DType dtype = DType::kFloat32);
  static Tensor from(Shape shape, std::vector<float> values);
  static Tensor from(Shape shape, std::vector<double> values);

  bool defined() const { return defined_; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;
  DType dtype() const { return dtype_; }

  template <typename T>
  std::span<T> data() {
    return std::span<T>(std::get<std::vector<T>>(storage_));
  }
  template <typename T>
  std::span<const T> data() const {
    return std::span<const T>(std::get<std::vector<T>>(storage_));
  }

  // dtype-agnostic element access, slow; meant for tests and reporting.
  double item(std::int64_t flat_index = 0) const;
  void set_item(std::int64_t flat_index, double value);
  std::vector<double> to_vector() const;

  Tensor to(DType dtype) const;
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  DType dtype_ = DType::kFloat32;
  bool defined_ = false;
  std::variant<std::vector<float>, std::vector<double>> storage_;
};

// dst += src; shapes and dtypes must match.
void accumulate(Tensor& dst, const Tensor& src);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace metabit
