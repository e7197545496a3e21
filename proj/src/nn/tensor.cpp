#include "ocskill/nn/tensor.hpp"

#include <cmath>
#include <numeric>

#include "ocskill/errors.hpp"

namespace ocskill::nn {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ConfigError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != shape_numel(shape_)) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                      shape_str(shape_));
  }
}

Tensor::Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                      shape_str(shape_));
  }
}

Tensor Tensor::matrix(int rows, int cols, std::initializer_list<float> values) {
  return Tensor({rows, cols}, std::vector<float>(values));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

float Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0f); }

Tensor Tensor::slice_rows(int begin, int end) const {
  if (shape_.empty() || begin < 0 || end > shape_[0] || begin > end) {
    throw UsageError("slice_rows out of range");
  }
  const std::size_t row = data_.size() / static_cast<std::size_t>(shape_[0]);
  Shape s = shape_;
  s[0] = end - begin;
  Storage d(data_.begin() + static_cast<std::ptrdiff_t>(row * begin),
                       data_.begin() + static_cast<std::ptrdiff_t>(row * end));
  return Tensor(std::move(s), std::move(d));
}

}  // namespace ocskill::nn
