#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace ocskill::nn {

using Shape = std::vector<int>;

/// 64-byte aligned storage, so vectorized kernels see the same alignment on every run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Storage = std::vector<float, AlignedAllocator<float>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float tensor. Rank 2 tensors are [rows, cols]; images are
/// stored NHWC.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);
  Tensor(Shape shape, Storage data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
  static Tensor scalar(float v) { return Tensor(Shape{1}, v); }
  static Tensor matrix(int rows, int cols, std::initializer_list<float> values);

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Row-major 2-D access; requires rank 2.
  float& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  float at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(float v);
  bool all_finite() const;
  float sum() const;

  /// Rows [begin, end) of the leading dimension.
  Tensor slice_rows(int begin, int end) const;

 private:
  Shape shape_;
  Storage data_;
};

}  // namespace ocskill::nn
