#pragma once

#include <memory>
#include <string>
#include <vector>

#include "brainage/ops.hpp"
#include "brainage/random.hpp"
#include "brainage/tensor.hpp"

namespace brainage::nn {

enum class LayerKind { kConv3d, kRelu, kBatchNorm3d, kMaxPool3d, kFlatten, kLinear };

const char* to_string(LayerKind kind);

/// A differentiable layer. forward() may cache what backward() needs, so
/// backward must follow the matching forward call.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Tensor<T> forward(const Tensor<T>& input, Mode mode) = 0;
  /// Accumulates parameter gradients and returns dL/dinput (empty when
  /// need_input_grad is false).
  virtual Tensor<T> backward(const Tensor<T>& input, const Tensor<T>& output, const Tensor<T>& grad_output,
                             bool need_input_grad) = 0;

  /// Trainable tensors, with names relative to the layer ("weight", "gamma", ...).
  virtual std::vector<Parameter<T>> parameters() { return {}; }
  /// Non-trainable persistent state (batchnorm running statistics).
  virtual std::vector<Parameter<T>> buffers() { return {}; }
  virtual std::unique_ptr<Layer<T>> clone() const = 0;
};

template <typename T>
class Conv3d final : public Layer<T> {
 public:
  Conv3d(std::size_t in_channels, std::size_t out_channels);

  /// Zero-mean normal weights with sd sqrt(2 / fan_in), zero bias.
  void initialize(Rng& rng);

  LayerKind kind() const override { return LayerKind::kConv3d; }
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& input, const Tensor<T>& output, const Tensor<T>& grad_output,
                     bool need_input_grad) override;
  std::vector<Parameter<T>> parameters() override { return {{"weight", &weight}, {"bias", &bias}}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv3d>(*this); }

  Tensor<T> weight;  // [C_out, C_in, 3, 3, 3]
  Tensor<T> bias;    // [C_out]
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::kRelu; }
  Tensor<T> forward(const Tensor<T>& input, Mode) override { return relu(input); }
  Tensor<T> backward(const Tensor<T>& input, const Tensor<T>&, const Tensor<T>& grad_output,
                     bool need_input_grad) override {
    return need_input_grad ? relu_backward(input, grad_output) : Tensor<T>{};
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Relu>(*this); }
};

template <typename T>
class BatchNorm3d final : public Layer<T> {
 public:
  explicit BatchNorm3d(std::size_t channels) : params(BatchNormParams<T>::make(channels)) {}

  LayerKind kind() const override { return LayerKind::kBatchNorm3d; }
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override {
    return batchnorm3d(input, params, mode, &cache_);
  }
  Tensor<T> backward(const Tensor<T>& input, const Tensor<T>& output, const Tensor<T>& grad_output,
                     bool need_input_grad) override;
  std::vector<Parameter<T>> parameters() override { return {{"gamma", &params.gamma}, {"beta", &params.beta}}; }
  std::vector<Parameter<T>> buffers() override {
    return {{"running_mean", &params.running_mean}, {"running_var", &params.running_var}};
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm3d>(*this); }

  BatchNormParams<T> params;

 private:
  BatchNormCache<T> cache_;
};

template <typename T>
class MaxPool3d final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::kMaxPool3d; }
  Tensor<T> forward(const Tensor<T>& input, Mode) override { return maxpool3d(input, &argmax_); }
  Tensor<T> backward(const Tensor<T>& input, const Tensor<T>&, const Tensor<T>& grad_output,
                     bool need_input_grad) override {
    return need_input_grad ? maxpool3d_backward(input.shape(), grad_output, argmax_) : Tensor<T>{};
  }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool3d>(*this); }

 private:
  std::vector<std::size_t> argmax_;
};

/// [N, ...] -> [N, prod(...)].
template <typename T>
class Flatten final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::kFlatten; }
  Tensor<T> forward(const Tensor<T>& input, Mode) override;
  Tensor<T> backward(const Tensor<T>& input, const Tensor<T>&, const Tensor<T>& grad_output,
                     bool need_input_grad) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Flatten>(*this); }
};

template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features);

  void initialize(Rng& rng);

  LayerKind kind() const override { return LayerKind::kLinear; }
  Tensor<T> forward(const Tensor<T>& input, Mode) override { return linear(input, weight, bias); }
  Tensor<T> backward(const Tensor<T>& input, const Tensor<T>& output, const Tensor<T>& grad_output,
                     bool need_input_grad) override;
  std::vector<Parameter<T>> parameters() override { return {{"weight", &weight}, {"bias", &bias}}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Linear>(*this); }

  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]
};

/// Ordered chain of layers; records activations during forward so backward
/// can replay the chain in reverse.
template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  void add(std::unique_ptr<Layer<T>> layer, std::string name);

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }
  const std::string& layer_name(std::size_t i) const { return names_[i]; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode);
  /// Backpropagates dL/doutput of the last forward call; returns dL/dinput
  /// when need_input_grad.
  Tensor<T> backward(const Tensor<T>& grad_output, bool need_input_grad = false);
  /// Drops cached activations.
  void clear_activations() { activations_.clear(); }

  /// Parameters with names "<layer_name>.<param>".
  std::vector<Parameter<T>> parameters();
  std::vector<Parameter<T>> buffers();

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> activations_;
};

extern template class Conv3d<float>;
extern template class Conv3d<double>;
extern template class BatchNorm3d<float>;
extern template class BatchNorm3d<double>;
extern template class Flatten<float>;
extern template class Flatten<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class Sequential<float>;
extern template class Sequential<double>;

}  // namespace brainage::nn
