#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "brainage/layers.hpp"
#include "brainage/volume.hpp"

namespace brainage::model {

/// Declarative description of the brain-age CNN: num_blocks repetitions of
/// [conv, relu, conv, batchnorm, relu, maxpool] with channel doubling, a
/// flatten, and one linear unit. branches = 2 is the fused GM + WM network.
struct ArchitectureSpec {
  Extent3 input_dims{32, 32, 32};
  std::size_t input_channels = 1;
  std::size_t base_feature_maps = 8;
  std::size_t num_blocks = 5;
  std::size_t branches = 1;
  /// Per-volume z-scoring of the input intensities before the first layer.
  bool zscore_input = false;

  /// Throws ValidationError naming the offending field or axis.
  void validate() const;

  /// Feature maps produced by block b (1-based).
  std::size_t channels_at_block(std::size_t block) const;
  std::size_t final_channels() const { return channels_at_block(num_blocks); }
  /// Spatial dims after the last pooling layer.
  Extent3 final_map_dims() const;
  /// Flattened feature width of one branch.
  std::size_t flatten_width() const;
  /// Input width of the linear head (all branches concatenated).
  std::size_t head_width() const { return branches * flatten_width(); }

  bool operator==(const ArchitectureSpec&) const = default;
};

template <typename T>
class Network;

Network<float> build_fused(const Network<float>& gm, const Network<float>& wm, std::uint64_t seed);

template <typename T>
class Network {
 public:
  explicit Network(ArchitectureSpec spec);

  const ArchitectureSpec& spec() const { return spec_; }
  std::size_t branch_count() const { return branches_.size(); }
  nn::Sequential<T>& branch(std::size_t b) { return branches_.at(b); }
  const nn::Sequential<T>& branch(std::size_t b) const { return branches_.at(b); }
  nn::Linear<T>& head() { return head_; }
  const nn::Linear<T>& head() const { return head_; }

  /// Fresh He-normal weights for every layer.
  void initialize(std::uint64_t seed);
  /// Fresh weights for the linear head only.
  void initialize_head(std::uint64_t seed);

  /// inputs[b] is the [N, C, D, H, W] batch for branch b. Returns [N, 1].
  nn::Tensor<T> forward(std::span<const nn::Tensor<T>> inputs, nn::Mode mode);
  /// Backpropagates dL/doutput ([N, 1]) of the last forward call into the
  /// parameter gradients.
  void backward(const nn::Tensor<T>& grad_output);

  /// Trainable tensors in a fixed order, named e.g. "branch0.block1.conv_a.weight", "head.bias".
  std::vector<nn::Parameter<T>> parameters();
  /// Batchnorm running statistics, same naming scheme.
  std::vector<nn::Parameter<T>> buffers();
  /// parameters() followed by buffers(): everything a checkpoint stores.
  std::vector<nn::Parameter<T>> state();
  void zero_grad();

  /// Copy with every tensor converted to U (used for 64-bit gradient checks).
  template <typename U>
  Network<U> cast() const;

 private:
  template <typename U>
  friend class Network;
  friend Network<float> build_fused(const Network<float>& gm, const Network<float>& wm, std::uint64_t seed);

  ArchitectureSpec spec_;
  std::vector<nn::Sequential<T>> branches_;
  nn::Linear<T> head_;
  std::vector<std::size_t> branch_widths_;
  nn::Tensor<T> head_input_;
};

/// Architecture with freshly initialized weights.
Network<float> build_single_branch(const ArchitectureSpec& spec, std::uint64_t seed);

/// Joins two trained single-branch networks: their convolutional stacks are
/// copied verbatim, their heads are dropped, and a fresh linear head maps the
/// concatenated flattened features to one output.
Network<float> build_fused(const Network<float>& gm, const Network<float>& wm, std::uint64_t seed);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace brainage::model
