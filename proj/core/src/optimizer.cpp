#include "brainage/optimizer.hpp"

#include "brainage/error.hpp"

namespace brainage::nn {

template <typename T>
void sgd_momentum_step(std::span<T> param, std::span<const T> grad, std::span<T> velocity,
                       const SgdHyperparameters& hp) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw ShapeError("sgd_momentum_step: parameter, gradient and velocity sizes differ");
  }
  const T mu = static_cast<T>(hp.momentum);
  const T lr = static_cast<T>(hp.learning_rate);
  const T wd = static_cast<T>(hp.weight_decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = mu * velocity[i] - lr * (grad[i] + wd * param[i]);
    param[i] += velocity[i];
  }
}

template void sgd_momentum_step(std::span<float>, std::span<const float>, std::span<float>,
                                const SgdHyperparameters&);
template void sgd_momentum_step(std::span<double>, std::span<const double>, std::span<double>,
                                const SgdHyperparameters&);

template <typename T>
void SgdMomentum<T>::step(const std::vector<Parameter<T>>& params) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const auto& p : params) velocity_.emplace_back(p.tensor->size(), T(0));
  }
  if (velocity_.size() != params.size()) throw ShapeError("optimizer parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& t = *params[i].tensor;
    if (velocity_[i].size() != t.size()) {
      throw ShapeError("optimizer velocity shape does not match parameter " + params[i].name);
    }
    t.ensure_grad();
    sgd_momentum_step<T>(t.values(), std::span<const T>(t.grad()), velocity_[i], hp_);
  }
}

template class SgdMomentum<float>;
template class SgdMomentum<double>;

}  // namespace brainage::nn
