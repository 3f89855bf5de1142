#pragma once

#include <vector>

#include "brainage/ops.hpp"
#include "brainage/tensor.hpp"

namespace brainage::nn {

/// SGD with (Sutskever-form) momentum and L2 weight decay, holding one
/// velocity buffer per parameter in registration order.
template <typename T>
class SgdMomentum {
 public:
  explicit SgdMomentum(SgdHyperparameters hp = {}) : hp_(hp) {}

  void set_learning_rate(double lr) { hp_.learning_rate = lr; }
  const SgdHyperparameters& hyperparameters() const { return hp_; }
  const std::vector<std::vector<T>>& velocity() const { return velocity_; }

  /// Applies one update using the gradients currently stored on each tensor.
  void step(const std::vector<Parameter<T>>& params);

 private:
  SgdHyperparameters hp_;
  std::vector<std::vector<T>> velocity_;
};

}  // namespace brainage::nn
