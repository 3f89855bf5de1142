#include "brainage/network.hpp"

#include <algorithm>

#include "brainage/error.hpp"
#include "brainage/random.hpp"

namespace brainage::model {

namespace {

const char* kAxisNames[3] = {"z", "h", "w"};

template <typename T>
nn::Sequential<T> make_branch(const ArchitectureSpec& spec) {
  nn::Sequential<T> seq;
  std::size_t in = spec.input_channels;
  for (std::size_t b = 1; b <= spec.num_blocks; ++b) {
    const std::size_t out = spec.channels_at_block(b);
    const std::string p = "block" + std::to_string(b) + ".";
    seq.add(std::make_unique<nn::Conv3d<T>>(in, out), p + "conv_a");
    seq.add(std::make_unique<nn::Relu<T>>(), p + "relu_a");
    seq.add(std::make_unique<nn::Conv3d<T>>(out, out), p + "conv_b");
    seq.add(std::make_unique<nn::BatchNorm3d<T>>(out), p + "bn");
    seq.add(std::make_unique<nn::Relu<T>>(), p + "relu_b");
    seq.add(std::make_unique<nn::MaxPool3d<T>>(), p + "pool");
    in = out;
  }
  seq.add(std::make_unique<nn::Flatten<T>>(), "flatten");
  return seq;
}

template <typename T>
void initialize_branch(nn::Sequential<T>& seq, Rng& rng) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    auto& layer = seq.layer(i);
    if (auto* conv = dynamic_cast<nn::Conv3d<T>*>(&layer)) {
      conv->initialize(rng);
    } else if (auto* bn = dynamic_cast<nn::BatchNorm3d<T>*>(&layer)) {
      bn->params = nn::BatchNormParams<T>::make(bn->params.gamma.size());
    }
  }
}

}  // namespace

void ArchitectureSpec::validate() const {
  if (input_channels == 0) throw ValidationError("architecture input_channels must be positive");
  if (base_feature_maps == 0) throw ValidationError("architecture base_feature_maps must be positive");
  if (num_blocks == 0) throw ValidationError("architecture num_blocks must be positive");
  if (num_blocks > 20) throw ValidationError("architecture num_blocks is unreasonably large");
  if (branches != 1 && branches != 2) throw ValidationError("architecture branches must be 1 or 2");
  const std::size_t min_extent = std::size_t{1} << num_blocks;
  for (std::size_t a = 0; a < 3; ++a) {
    if (input_dims[a] < min_extent) {
      throw ValidationError("input axis " + std::string(kAxisNames[a]) + " has " + std::to_string(input_dims[a]) +
                            " voxels; " + std::to_string(num_blocks) + " pooling blocks need at least " +
                            std::to_string(min_extent));
    }
  }
}

std::size_t ArchitectureSpec::channels_at_block(std::size_t block) const {
  return base_feature_maps << (block - 1);
}

Extent3 ArchitectureSpec::final_map_dims() const {
  Extent3 d = input_dims;
  for (std::size_t b = 0; b < num_blocks; ++b) {
    for (auto& x : d) x /= 2;
  }
  return d;
}

std::size_t ArchitectureSpec::flatten_width() const {
  return final_channels() * voxel_count(final_map_dims());
}

template <typename T>
Network<T>::Network(ArchitectureSpec spec) : spec_(spec), head_(1, 1) {
  spec_.validate();
  for (std::size_t b = 0; b < spec_.branches; ++b) {
    branches_.push_back(make_branch<T>(spec_));
    branch_widths_.push_back(spec_.flatten_width());
  }
  head_ = nn::Linear<T>(spec_.head_width(), 1);
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& br : branches_) initialize_branch(br, rng);
  head_.initialize(rng);
}

template <typename T>
void Network<T>::initialize_head(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x4EAD));
  head_.initialize(rng);
}

template <typename T>
nn::Tensor<T> Network<T>::forward(std::span<const nn::Tensor<T>> inputs, nn::Mode mode) {
  if (inputs.size() != branches_.size()) {
    throw ShapeError("network expects " + std::to_string(branches_.size()) + " input batches, got " +
                     std::to_string(inputs.size()));
  }
  const nn::Shape expected_tail{spec_.input_channels, spec_.input_dims[0], spec_.input_dims[1],
                                spec_.input_dims[2]};
  const std::size_t n = inputs[0].rank() == 5 ? inputs[0].dim(0) : 0;
  for (const auto& in : inputs) {
    if (in.rank() != 5 || nn::Shape(in.shape().begin() + 1, in.shape().end()) != expected_tail || in.dim(0) != n) {
      throw ShapeError("network input shape " + nn::to_string(in.shape()) + " does not match architecture [N," +
                       nn::to_string(expected_tail).substr(1));
    }
  }
  if (branches_.size() == 1) {
    head_input_ = branches_[0].forward(inputs[0], mode);
    return head_.forward(head_input_, mode);
  }
  head_input_ = nn::Tensor<T>({n, spec_.head_width()});
  std::size_t offset = 0;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    const nn::Tensor<T> f = branches_[b].forward(inputs[b], mode);
    const std::size_t w = branch_widths_[b];
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(f.data() + i * w, w, head_input_.data() + i * spec_.head_width() + offset);
    }
    offset += w;
  }
  return head_.forward(head_input_, mode);
}

template <typename T>
void Network<T>::backward(const nn::Tensor<T>& grad_output) {
  if (head_input_.empty()) throw ValidationError("Network::backward called without a preceding forward");
  const nn::Tensor<T> grad_features = head_.backward(head_input_, {}, grad_output, true);
  if (branches_.size() == 1) {
    branches_[0].backward(grad_features);
    return;
  }
  const std::size_t n = grad_features.dim(0);
  std::size_t offset = 0;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    const std::size_t w = branch_widths_[b];
    nn::Tensor<T> g({n, w});
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(grad_features.data() + i * spec_.head_width() + offset, w, g.data() + i * w);
    }
    branches_[b].backward(g);
    offset += w;
  }
}

template <typename T>
std::vector<nn::Parameter<T>> Network<T>::parameters() {
  std::vector<nn::Parameter<T>> out;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    for (auto& p : branches_[b].parameters()) out.push_back({"branch" + std::to_string(b) + "." + p.name, p.tensor});
  }
  for (auto& p : head_.parameters()) out.push_back({"head." + p.name, p.tensor});
  return out;
}

template <typename T>
std::vector<nn::Parameter<T>> Network<T>::buffers() {
  std::vector<nn::Parameter<T>> out;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    for (auto& p : branches_[b].buffers()) out.push_back({"branch" + std::to_string(b) + "." + p.name, p.tensor});
  }
  return out;
}

template <typename T>
std::vector<nn::Parameter<T>> Network<T>::state() {
  auto out = parameters();
  for (auto& p : buffers()) out.push_back(p);
  return out;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  Network<U> out(spec_);
  auto& self = const_cast<Network<T>&>(*this);
  auto src = self.state();
  auto dst = out.state();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto sv = src[i].tensor->values();
    auto dv = dst[i].tensor->values();
    for (std::size_t k = 0; k < sv.size(); ++k) dv[k] = static_cast<U>(sv[k]);
  }
  return out;
}

template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

Network<float> build_single_branch(const ArchitectureSpec& spec, std::uint64_t seed) {
  if (spec.branches != 1) throw ValidationError("build_single_branch requires branches = 1");
  Network<float> net(spec);
  net.initialize(seed);
  return net;
}

Network<float> build_fused(const Network<float>& gm, const Network<float>& wm, std::uint64_t seed) {
  const ArchitectureSpec& a = gm.spec();
  const ArchitectureSpec& b = wm.spec();
  if (a.branches != 1 || b.branches != 1) throw ValidationError("build_fused takes two single-branch networks");
  if (a.num_blocks != b.num_blocks) {
    throw ValidationError("build_fused: branch block counts differ (" + std::to_string(a.num_blocks) + " vs " +
                          std::to_string(b.num_blocks) + ")");
  }
  if (!(a == b)) {
    throw ValidationError("build_fused: branch architectures differ (input dims, channels or feature maps)");
  }
  ArchitectureSpec fused = a;
  fused.branches = 2;
  Network<float> net(fused);
  net.branches_[0] = gm.branches_[0];
  net.branches_[1] = wm.branches_[0];
  net.initialize_head(seed);
  return net;
}

template class Network<float>;
template class Network<double>;

}  // namespace brainage::model
