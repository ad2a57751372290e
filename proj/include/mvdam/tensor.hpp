#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mvdam/error.hpp"
#include "mvdam/rng.hpp"

namespace mvdam {

// Fixed-capacity dimension list. Rank 0 is a scalar.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) {
    if (dims.size() > kMaxRank) throw ValidationError("Shape: rank exceeds 4");
    for (std::size_t d : dims) dims_[rank_++] = d;
  }
  explicit Shape(std::span<const std::size_t> dims) {
    if (dims.size() > kMaxRank) throw ValidationError("Shape: rank exceeds 4");
    for (std::size_t d : dims) dims_[rank_++] = d;
  }

  std::size_t rank() const { return rank_; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }

  friend bool operator==(const Shape& a, const Shape& b) {
    if (a.rank_ != b.rank_) return false;
    for (std::size_t i = 0; i < a.rank_; ++i)
      if (a.dims_[i] != b.dims_[i]) return false;
    return true;
  }

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < rank_; ++i) os << (i ? "," : "") << dims_[i];
    os << ']';
    return os.str();
  }

 private:
  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
      throw ValidationError("Tensor: data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_.str());
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(s, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor(Shape{rows, cols}, std::move(v));
  }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

  // Entries drawn uniformly from [-limit, limit].
  static Tensor uniform(Shape shape, double limit, Rng& rng) {
    Tensor t(shape);
    for (double& x : t.data_) x = rng.uniform(-limit, limit);
    return t;
  }
  static Tensor normal(Shape shape, double stddev, Rng& rng) {
    Tensor t(shape);
    for (double& x : t.data_) x = stddev * rng.normal();
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.rank() == 0 ? 1 : shape_[shape_.rank() - 1]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const {
    if (data_.size() != 1) throw ValidationError("Tensor::item on tensor of shape " + shape_.str());
    return data_[0];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    check_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  void check_same(const Tensor& o, const char* what) const {
    if (!(shape_ == o.shape_))
      throw ValidationError(std::string("Tensor ") + what + ": shape mismatch " + shape_.str() +
                            " vs " + o.shape_.str());
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace mvdam
