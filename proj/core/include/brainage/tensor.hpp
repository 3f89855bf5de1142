#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace brainage::nn {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage. Eigen's vectorized reductions peel a scalar head
/// up to the first aligned element, so the summation order (and the last bits
/// of the result) would otherwise depend on where malloc placed the buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array with an optional gradient buffer of the same shape.
/// Float is the training / inference width; double backs gradient checks.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  bool has_grad() const { return !grad_.empty(); }
  /// Allocates (zeroed) the gradient buffer if absent.
  void ensure_grad();
  void zero_grad();
  std::span<T> grad() { return grad_; }
  std::span<const T> grad() const { return grad_; }

  /// Same values, new shape of identical element count.
  void reshape(Shape shape);

 private:
  Shape shape_;
  AlignedVector<T> values_;
  AlignedVector<T> grad_;
};

/// A named trainable tensor. Gradients accumulate in tensor.grad().
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T>* tensor = nullptr;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace brainage::nn
