#include "metabit/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace metabit {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor::Tensor(Shape shape, DType dtype)
    : shape_(std::move(shape)), dtype_(dtype), defined_(true) {
  for (auto e : shape_) {
    if (e < 1) throw ShapeError("tensor extents must be >= 1, got " + to_string(shape_));
  }
  const auto n = static_cast<std::size_t>(shape_numel(shape_));
  if (dtype_ == DType::kFloat64) {
    storage_ = std::vector<double>(n, 0.0);
  } else {
    storage_ = std::vector<float>(n, 0.0f);
  }
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  visit_dtype(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

Tensor Tensor::from(Shape shape, std::vector<float> values) {
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + to_string(shape));
  }
  Tensor t(std::move(shape), DType::kFloat32);
  t.storage_ = std::move(values);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + to_string(shape));
  }
  Tensor t(std::move(shape), DType::kFloat64);
  t.storage_ = std::move(values);
  return t;
}

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return defined_ ? shape_numel(shape_) : 0; }

double Tensor::item(std::int64_t i) const {
  return visit_dtype(dtype_, [&](auto tag) -> double {
    using T = decltype(tag);
    return static_cast<double>(data<T>()[static_cast<std::size_t>(i)]);
  });
}

void Tensor::set_item(std::int64_t i, double value) {
  visit_dtype(dtype_, [&](auto tag) {
    using T = decltype(tag);
    data<T>()[static_cast<std::size_t>(i)] = static_cast<T>(value);
  });
}

std::vector<double> Tensor::to_vector() const {
  return visit_dtype(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto d = data<T>();
    return std::vector<double>(d.begin(), d.end());
  });
}

Tensor Tensor::to(DType dtype) const {
  if (dtype == dtype_) return *this;
  Tensor out(shape_, dtype);
  visit_dtype(dtype_, [&](auto src_tag) {
    using S = decltype(src_tag);
    visit_dtype(dtype, [&](auto dst_tag) {
      using D = decltype(dst_tag);
      auto s = data<S>();
      auto d = out.data<D>();
      for (std::size_t i = 0; i < s.size(); ++i) d[i] = static_cast<D>(s[i]);
    });
  });
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  for (auto e : shape) {
    if (e < 1) throw ShapeError("tensor extents must be >= 1, got " + to_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.defined_ == b.defined_ && a.shape_ == b.shape_ && a.dtype_ == b.dtype_ &&
         a.storage_ == b.storage_;
}

void accumulate(Tensor& dst, const Tensor& src) {
  if (!dst.defined()) {
    dst = src;
    return;
  }
  if (dst.shape() != src.shape() || dst.dtype() != src.dtype()) {
    throw ShapeError("cannot accumulate " + to_string(src.shape()) + " into " +
                     to_string(dst.shape()));
  }
  visit_dtype(dst.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = dst.data<T>();
    auto s = src.data<T>();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.item(i) - b.item(i)));
  return m;
}

}  // namespace metabit
