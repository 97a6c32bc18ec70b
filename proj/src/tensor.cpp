#include "tsa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tsa {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("Tensor: zero extent in shape");
    n *= e;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
  if (shape_.empty()) throw std::invalid_argument("Tensor: empty shape");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_.empty()) throw std::invalid_argument("Tensor: empty shape");
  if (data_.size() != shape_product(shape_)) {
    throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str());
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vec(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> values) {
  return Tensor({r, c}, std::move(values));
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

std::size_t Tensor::rows() const { return shape_.empty() ? 0 : data_.size() / shape_.back(); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_finite(const char* context) const {
  if (!all_finite()) {
    throw std::runtime_error(std::string(context) + ": non-finite value in tensor of shape " +
                             shape_str());
  }
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace tsa
