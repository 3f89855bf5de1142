#include "brainage/layers.hpp"

#include <cmath>

#include "brainage/error.hpp"

namespace brainage::nn {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv3d: return "conv3d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kBatchNorm3d: return "batchnorm3d";
    case LayerKind::kMaxPool3d: return "maxpool3d";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kLinear: return "linear";
  }
  return "unknown";
}

namespace {

template <typename T>
void he_normal(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

}  // namespace

template <typename T>
Conv3d<T>::Conv3d(std::size_t in_channels, std::size_t out_channels)
    : weight({out_channels, in_channels, kKernelExtent, kKernelExtent, kKernelExtent}), bias({out_channels}) {}

template <typename T>
void Conv3d<T>::initialize(Rng& rng) {
  he_normal(weight, weight.dim(1) * kKernelVolume, rng);
  for (auto& b : bias.values()) b = T(0);
}

template <typename T>
Tensor<T> Conv3d<T>::forward(const Tensor<T>& input, Mode) {
  return conv3d(input, weight, bias);
}

template <typename T>
Tensor<T> Conv3d<T>::backward(const Tensor<T>& input, const Tensor<T>&, const Tensor<T>& grad_output,
                              bool need_input_grad) {
  weight.ensure_grad();
  bias.ensure_grad();
  return conv3d_backward(input, weight, grad_output, weight.grad(), bias.grad(), need_input_grad);
}

template <typename T>
Tensor<T> BatchNorm3d<T>::backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>& grad_output, bool) {
  params.gamma.ensure_grad();
  params.beta.ensure_grad();
  // The input gradient is cheap relative to the statistics pass, so it is
  // always produced.
  return batchnorm3d_backward(grad_output, params, cache_, params.gamma.grad(), params.beta.grad());
}

template <typename T>
Tensor<T> Flatten<T>::forward(const Tensor<T>& input, Mode) {
  Tensor<T> out = input;
  out.reshape({input.dim(0), input.size() / input.dim(0)});
  return out;
}

template <typename T>
Tensor<T> Flatten<T>::backward(const Tensor<T>& input, const Tensor<T>&, const Tensor<T>& grad_output,
                               bool need_input_grad) {
  if (!need_input_grad) return {};
  Tensor<T> g = grad_output;
  g.reshape(input.shape());
  return g;
}

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features)
    : weight({out_features, in_features}), bias({out_features}) {}

template <typename T>
void Linear<T>::initialize(Rng& rng) {
  he_normal(weight, weight.dim(1), rng);
  for (auto& b : bias.values()) b = T(0);
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& input, const Tensor<T>&, const Tensor<T>& grad_output,
                              bool need_input_grad) {
  weight.ensure_grad();
  bias.ensure_grad();
  return linear_backward(input, weight, grad_output, weight.grad(), bias.grad(), need_input_grad);
}

template <typename T>
Sequential<T>::Sequential(const Sequential& other) : names_(other.names_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Sequential<T>& Sequential<T>::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
void Sequential<T>::add(std::unique_ptr<Layer<T>> layer, std::string name) {
  layers_.push_back(std::move(layer));
  names_.push_back(std::move(name));
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& input, Mode mode) {
  activations_.clear();
  activations_.reserve(layers_.size() + 1);
  activations_.push_back(input);
  for (auto& l : layers_) activations_.push_back(l->forward(activations_.back(), mode));
  return activations_.back();
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_output, bool need_input_grad) {
  if (activations_.size() != layers_.size() + 1) {
    throw ValidationError("Sequential::backward called without a preceding forward");
  }
  Tensor<T> grad = grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need = need_input_grad || i > 0;
    grad = layers_[i]->backward(activations_[i], activations_[i + 1], grad, need);
    // Activations past this point are no longer needed.
    activations_[i + 1] = Tensor<T>{};
  }
  return grad;
}

template <typename T>
std::vector<Parameter<T>> Sequential<T>::parameters() {
  std::vector<Parameter<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto& p : layers_[i]->parameters()) out.push_back({names_[i] + "." + p.name, p.tensor});
  }
  return out;
}

template <typename T>
std::vector<Parameter<T>> Sequential<T>::buffers() {
  std::vector<Parameter<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto& p : layers_[i]->buffers()) out.push_back({names_[i] + "." + p.name, p.tensor});
  }
  return out;
}

template class Conv3d<float>;
template class Conv3d<double>;
template class BatchNorm3d<float>;
template class BatchNorm3d<double>;
template class Flatten<float>;
template class Flatten<double>;
template class Linear<float>;
template class Linear<double>;
template class Sequential<float>;
template class Sequential<double>;

}  // namespace brainage::nn
