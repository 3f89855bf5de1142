#include "brainage/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "brainage/error.hpp"

namespace brainage::nn {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), values_(element_count(shape_), fill) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor shape " + to_string(shape_) + " has a zero extent");
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (values_.size() != element_count(shape_)) {
    throw ShapeError("tensor shape " + to_string(shape_) + " does not match " + std::to_string(values_.size()) +
                     " values");
  }
}

template <typename T>
void Tensor<T>::ensure_grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), T(0));
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (grad_.size() != values_.size()) {
    grad_.assign(values_.size(), T(0));
  } else {
    std::fill(grad_.begin(), grad_.end(), T(0));
  }
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
  if (element_count(shape) != values_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  shape_ = std::move(shape);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace brainage::nn
