#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>

namespace glf {

/// Thrown when tensor shapes are incompatible with an operation.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when a network/codec configuration is structurally invalid.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when a file cannot be parsed or written.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// (batch, channels, height, width) extents of a dense tensor.
struct Dims4 {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t count() const { return n * c * h * w; }
  bool operator==(const Dims4&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

/// Dense 4-D array in row-major (N,C,H,W) order backed by an Eigen array.
/// The scalar type selects the compute precision (float for training,
/// double for gradient checking).
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Dims4 dims) : dims_(dims), data_(Array::Zero(dims.count())) {}

  static Tensor zeros(Dims4 dims) { return Tensor(dims); }

  static Tensor full(Dims4 dims, Scalar v) {
    Tensor t(dims);
    t.data_.setConstant(v);
    return t;
  }

  static Tensor from(Dims4 dims, std::span<const Scalar> values) {
    if (static_cast<std::int64_t>(values.size()) != dims.count())
      throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                       " values for dims " + dims.str());
    Tensor t(dims);
    std::copy(values.begin(), values.end(), t.data_.data());
    return t;
  }

  static Tensor from(Dims4 dims, std::initializer_list<Scalar> values) {
    return from(dims, std::span<const Scalar>(values.begin(), values.size()));
  }

  const Dims4& dims() const { return dims_; }
  std::int64_t size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Array& array() { return data_; }
  const Array& array() const { return data_; }

  Scalar& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[index(n, c, h, w)];
  }
  Scalar operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[index(n, c, h, w)];
  }

  Scalar* plane(std::int64_t n, std::int64_t c) { return data_.data() + index(n, c, 0, 0); }
  const Scalar* plane(std::int64_t n, std::int64_t c) const {
    return data_.data() + index(n, c, 0, 0);
  }

  void set_zero() { data_.setZero(); }

  bool all_finite() const { return data_.isFinite().all(); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(dims_);
    out.array() = data_.template cast<Other>();
    return out;
  }

 private:
  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((n * dims_.c + c) * dims_.h + h) * dims_.w + w;
  }

  Dims4 dims_{};
  Array data_;
};

template <typename Scalar>
Scalar mean_of(const Tensor<Scalar>& t) {
  return t.size() == 0 ? Scalar(0) : t.array().mean();
}

/// Population standard deviation over all elements.
template <typename Scalar>
Scalar std_of(const Tensor<Scalar>& t) {
  if (t.size() == 0) return Scalar(0);
  Scalar m = t.array().mean();
  return std::sqrt((t.array() - m).square().mean());
}

}  // namespace glf
