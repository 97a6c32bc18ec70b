#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tsa {

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover everything the
// model needs; kernels view any tensor as (rows x cols) with cols = last
// extent. Values are required to stay finite; ops validate their outputs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> values);

  bool empty() const { return data_.empty(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }
  std::size_t cols() const;          // last extent
  std::size_t rows() const;          // size / cols

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  void fill(double v);
  bool all_finite() const;
  // Throws std::runtime_error naming `context` if any value is NaN/Inf.
  void require_finite(const char* context) const;
  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace tsa
