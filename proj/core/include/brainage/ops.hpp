#pragma once

// Forward / backward kernels for the layer set of the brain-age CNN. Layer
// objects in layers.hpp wrap these; tests call them directly.

#include <cstddef>
#include <span>
#include <vector>

#include "brainage/tensor.hpp"

namespace brainage::nn {

enum class Mode { kTrain, kEval };

inline constexpr std::size_t kKernelExtent = 3;
inline constexpr std::size_t kKernelVolume = 27;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// --- conv3d: 3x3x3 kernel, stride 1, zero padding 1 ("same" output size) ---

/// input [N, C_in, D, H, W], weight [C_out, C_in, 3, 3, 3], bias [C_out].
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// Accumulates dL/dweight and dL/dbias into the given spans and returns
/// dL/dinput (an empty tensor when need_input_grad is false).
template <typename T>
Tensor<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_output,
                          std::span<T> weight_grad, std::span<T> bias_grad, bool need_input_grad);

// --- relu ---

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

/// Passes grad_output where input > 0; zero elsewhere (including input == 0).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output);

// --- batchnorm3d ---

template <typename T>
struct BatchNormParams {
  Tensor<T> gamma;         // [C]
  Tensor<T> beta;          // [C]
  Tensor<T> running_mean;  // [C]
  Tensor<T> running_var;   // [C], biased batch variance estimates

  static BatchNormParams make(std::size_t channels);
};

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::kTrain;
  Tensor<T> normalized;          // x-hat, same shape as the input
  std::vector<double> inv_std;   // per channel
};

/// Train mode normalizes by the biased batch statistics over (N, D, H, W) and
/// updates the running statistics; eval mode uses the running statistics.
template <typename T>
Tensor<T> batchnorm3d(const Tensor<T>& input, BatchNormParams<T>& params, Mode mode,
                      BatchNormCache<T>* cache = nullptr);

template <typename T>
Tensor<T> batchnorm3d_backward(const Tensor<T>& grad_output, const BatchNormParams<T>& params,
                               const BatchNormCache<T>& cache, std::span<T> gamma_grad, std::span<T> beta_grad);

// --- maxpool3d: 2x2x2 window, stride 2, trailing odd slices dropped ---

/// argmax, when given, receives the flat input index chosen for every output
/// element (first maximum in window order on ties).
template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& input, std::vector<std::size_t>* argmax = nullptr);

template <typename T>
Tensor<T> maxpool3d_backward(const Shape& input_shape, const Tensor<T>& grad_output,
                             const std::vector<std::size_t>& argmax);

// --- linear ---

/// input [N, F], weight [out, F], bias [out] -> [N, out].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_output,
                          std::span<T> weight_grad, std::span<T> bias_grad, bool need_input_grad);

// --- loss ---

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;  // dL/dpred, shape of pred
};

/// Mean absolute error over N predictions; gradient sign(pred - target) / N
/// with sign(0) = 0.
template <typename T>
LossResult<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target);

// --- optimizer ---

struct SgdHyperparameters {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.00005;
};

/// v <- momentum * v - lr * (g + wd * theta); theta <- theta + v.
template <typename T>
void sgd_momentum_step(std::span<T> param, std::span<const T> grad, std::span<T> velocity,
                       const SgdHyperparameters& hp);

}  // namespace brainage::nn
