#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ctxcap {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& op, const Shape& a, const Shape& b)
      : std::invalid_argument(op + ": shape " + shape_str(a) + " incompatible with " + shape_str(b)) {}
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Thrown when a computation produces a non-finite value that callers must not
// silently propagate (loss, gradient check).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major array with a same-shape gradient accumulator.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_shape();
    values_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_shape();
    if (values_.size() != shape_numel(shape_))
      throw DimensionError("tensor: " + std::to_string(values_.size()) + " values for shape " +
                           shape_str(shape_));
  }

  static Tensor vec(std::vector<T> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  std::vector<T>& data() noexcept { return values_; }
  const std::vector<T>& data() const noexcept { return values_; }

  // The gradient buffer is allocated on first mutable access.
  std::span<T> grad() {
    if (grad_.size() != values_.size()) grad_.assign(values_.size(), T(0));
    return grad_;
  }
  std::span<const T> grad() const {
    if (grad_.size() != values_.size()) return {};
    return grad_;
  }
  bool has_grad() const noexcept { return grad_.size() == values_.size() && !values_.empty(); }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T(0)); }
  void drop_grad() {
    grad_.clear();
    grad_.shrink_to_fit();
  }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }
  T& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }
  T item() const {
    if (values_.size() != 1) throw DimensionError("item: tensor " + shape_str(shape_) + " is not a scalar");
    return values_[0];
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(values_.begin(), values_.end(), out.values().begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  void check_shape() const {
    for (auto d : shape_)
      if (d == 0) throw DimensionError("tensor: zero dimension in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<T> values_;
  std::vector<T> grad_;
};

}  // namespace ctxcap
