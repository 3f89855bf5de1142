#include "brainage/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "brainage/error.hpp"
#include "brainage/parallel.hpp"

namespace brainage::nn {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using Map = Eigen::Map<RowMatrix<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements per worker; output z-planes are
// processed in slabs so large volumes do not need a full column matrix.
constexpr std::size_t kColumnBudget = std::size_t{1} << 16;

struct ConvGeometry {
  std::size_t n, c_in, c_out, d, h, w;
  std::size_t plane() const { return h * w; }
  std::size_t spatial() const { return d * h * w; }
  std::size_t k() const { return c_in * kKernelVolume; }
  std::size_t slab_planes() const {
    const std::size_t per_plane = k() * plane();
    return std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_plane, 1), 1, d);
  }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (input.rank() != 5) throw ShapeError("conv3d input must be [N,C,D,H,W], got " + to_string(input.shape()));
  if (weight.rank() != 5 || weight.dim(2) != kKernelExtent || weight.dim(3) != kKernelExtent ||
      weight.dim(4) != kKernelExtent) {
    throw ShapeError("conv3d weight must be [C_out,C_in,3,3,3], got " + to_string(weight.shape()));
  }
  if (weight.dim(1) != input.dim(1)) {
    throw ShapeError("conv3d channel mismatch: input has " + std::to_string(input.dim(1)) + ", weight expects " +
                     std::to_string(weight.dim(1)));
  }
  if (bias.size() != weight.dim(0)) throw ShapeError("conv3d bias length does not match C_out");
  return {input.dim(0), input.dim(1), weight.dim(0), input.dim(2), input.dim(3), input.dim(4)};
}

// Fills col[K, (z1 - z0) * H * W] for one sample.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, std::size_t z0, std::size_t z1, T* col) {
  const std::size_t cols = (z1 - z0) * g.plane();
  const auto H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w),
             D = static_cast<std::ptrdiff_t>(g.d);
  for (std::size_t ci = 0; ci < g.c_in; ++ci) {
    const T* xc = x + ci * g.spatial();
    for (std::ptrdiff_t kz = 0; kz < 3; ++kz) {
      for (std::ptrdiff_t kh = 0; kh < 3; ++kh) {
        for (std::ptrdiff_t kw = 0; kw < 3; ++kw) {
          T* row = col + (ci * kKernelVolume + static_cast<std::size_t>(kz * 9 + kh * 3 + kw)) * cols;
          const std::ptrdiff_t w_lo = std::max<std::ptrdiff_t>(0, 1 - kw);
          const std::ptrdiff_t w_hi = std::min<std::ptrdiff_t>(W, W + 1 - kw);
          for (std::size_t z = z0; z < z1; ++z) {
            const std::ptrdiff_t iz = static_cast<std::ptrdiff_t>(z) + kz - 1;
            for (std::ptrdiff_t hh = 0; hh < H; ++hh) {
              T* dst = row + ((z - z0) * g.plane() + static_cast<std::size_t>(hh * W));
              const std::ptrdiff_t ih = hh + kh - 1;
              if (iz < 0 || iz >= D || ih < 0 || ih >= H) {
                std::fill(dst, dst + W, T(0));
                continue;
              }
              const T* src = xc + (iz * H + ih) * W + (kw - 1);
              std::fill(dst, dst + w_lo, T(0));
              std::copy(src + w_lo, src + w_hi, dst + w_lo);
              std::fill(dst + w_hi, dst + W, T(0));
            }
          }
        }
      }
    }
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  const ConvGeometry g = conv_geometry(input, weight, bias);
  Tensor<T> out({g.n, g.c_out, g.d, g.h, g.w});
  const std::size_t slab = g.slab_planes();
  const ConstMap<T> wm(weight.data(), static_cast<Eigen::Index>(g.c_out), static_cast<Eigen::Index>(g.k()));
  const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(bias.data(), static_cast<Eigen::Index>(g.c_out));

  parallel_chunks(0, g.n, [&](std::size_t, std::size_t lo, std::size_t hi) {
    AlignedVector<T> col(g.k() * slab * g.plane());
    for (std::size_t n = lo; n < hi; ++n) {
      const T* x = input.data() + n * g.c_in * g.spatial();
      T* y = out.data() + n * g.c_out * g.spatial();
      for (std::size_t z0 = 0; z0 < g.d; z0 += slab) {
        const std::size_t z1 = std::min(g.d, z0 + slab);
        const auto cols = static_cast<Eigen::Index>((z1 - z0) * g.plane());
        im2col(x, g, z0, z1, col.data());
        const ConstMap<T> cm(col.data(), static_cast<Eigen::Index>(g.k()), cols);
        StridedMap<T> ym(y + z0 * g.plane(), static_cast<Eigen::Index>(g.c_out), cols,
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(g.spatial())));
        ym.noalias() = wm * cm;
        ym.colwise() += bv;
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> conv3d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_output,
                          std::span<T> weight_grad, std::span<T> bias_grad, bool need_input_grad) {
  const ConvGeometry g = conv_geometry(input, weight, Tensor<T>({weight.dim(0)}));
  if (grad_output.shape() != Shape{g.n, g.c_out, g.d, g.h, g.w}) {
    throw ShapeError("conv3d grad_output shape " + to_string(grad_output.shape()));
  }
  if (weight_grad.size() != weight.size() || bias_grad.size() != g.c_out) {
    throw ShapeError("conv3d gradient buffers do not match parameter shapes");
  }
  const std::size_t slab = g.slab_planes();
  const auto K = static_cast<Eigen::Index>(g.k());
  const auto C = static_cast<Eigen::Index>(g.c_out);

  // Per-worker accumulators reduced in worker order.
  const std::size_t workers = std::min(num_threads(), g.n);
  std::vector<RowMatrix<T>> gw_parts(workers, RowMatrix<T>::Zero(C, K));
  std::vector<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb_parts(workers, Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(C));

  parallel_chunks(0, g.n, [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
    AlignedVector<T> col(g.k() * slab * g.plane());
    RowMatrix<T>& gw = gw_parts[chunk];
    auto& gb = gb_parts[chunk];
    for (std::size_t n = lo; n < hi; ++n) {
      const T* x = input.data() + n * g.c_in * g.spatial();
      const T* gy = grad_output.data() + n * g.c_out * g.spatial();
      for (std::size_t z0 = 0; z0 < g.d; z0 += slab) {
        const std::size_t z1 = std::min(g.d, z0 + slab);
        const auto cols = static_cast<Eigen::Index>((z1 - z0) * g.plane());
        const ConstStridedMap<T> gym(gy + z0 * g.plane(), C, cols,
                                     Eigen::OuterStride<>(static_cast<Eigen::Index>(g.spatial())));
        im2col(x, g, z0, z1, col.data());
        gw.noalias() += gym * ConstMap<T>(col.data(), K, cols).transpose();
        gb += gym.rowwise().sum();
      }
    }
  });

  Map<T> wg(weight_grad.data(), C, K);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> bg(bias_grad.data(), C);
  for (std::size_t w = 0; w < workers; ++w) {
    wg += gw_parts[w];
    bg += gb_parts[w];
  }

  if (!need_input_grad) return {};
  // With stride 1 and padding 1 the input gradient is itself a "same"
  // convolution of grad_output with the spatially flipped kernel whose
  // channel axes are swapped.
  Tensor<T> flipped({g.c_in, g.c_out, kKernelExtent, kKernelExtent, kKernelExtent});
  for (std::size_t co = 0; co < g.c_out; ++co)
    for (std::size_t ci = 0; ci < g.c_in; ++ci)
      for (std::size_t k = 0; k < kKernelVolume; ++k)
        flipped[(ci * g.c_out + co) * kKernelVolume + (kKernelVolume - 1 - k)] =
            weight[(co * g.c_in + ci) * kKernelVolume + k];
  return conv3d(grad_output, flipped, Tensor<T>({g.c_in}));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  const auto x = input.values();
  auto y = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
  require_same_shape(input, grad_output, "relu backward");
  Tensor<T> out(input.shape());
  const auto x = input.values();
  const auto gy = grad_output.values();
  auto gx = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > T(0) ? gy[i] : T(0);
  return out;
}

template <typename T>
BatchNormParams<T> BatchNormParams<T>::make(std::size_t channels) {
  return {Tensor<T>({channels}, T(1)), Tensor<T>({channels}, T(0)), Tensor<T>({channels}, T(0)),
          Tensor<T>({channels}, T(1))};
}

template <typename T>
Tensor<T> batchnorm3d(const Tensor<T>& input, BatchNormParams<T>& params, Mode mode, BatchNormCache<T>* cache) {
  if (input.rank() != 5) throw ShapeError("batchnorm3d input must be [N,C,D,H,W], got " + to_string(input.shape()));
  const std::size_t N = input.dim(0), C = input.dim(1);
  const std::size_t S = input.dim(2) * input.dim(3) * input.dim(4);
  if (params.gamma.size() != C || params.beta.size() != C || params.running_mean.size() != C ||
      params.running_var.size() != C) {
    throw ShapeError("batchnorm3d parameters do not match " + std::to_string(C) + " channels");
  }
  const std::size_t M = N * S;
  if (mode == Mode::kTrain && M < 2) {
    throw ShapeError("batchnorm3d train mode needs at least 2 values per channel (variance undefined)");
  }

  Tensor<T> out(input.shape());
  Tensor<T> normalized(input.shape());
  std::vector<double> inv_std(C);
  const T* x = input.data();
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::kTrain) {
      double sum = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* xc = x + (n * C + c) * S;
        for (std::size_t s = 0; s < S; ++s) sum += xc[s];
      }
      mean = sum / static_cast<double>(M);
      double sq = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* xc = x + (n * C + c) * S;
        for (std::size_t s = 0; s < S; ++s) {
          const double d = xc[s] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(M);
      params.running_mean[c] =
          static_cast<T>((1.0 - kBatchNormMomentum) * params.running_mean[c] + kBatchNormMomentum * mean);
      params.running_var[c] =
          static_cast<T>((1.0 - kBatchNormMomentum) * params.running_var[c] + kBatchNormMomentum * var);
    } else {
      mean = params.running_mean[c];
      var = params.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + kBatchNormEps);
    inv_std[c] = is;
    const double gamma = params.gamma[c], beta = params.beta[c];
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        const double xh = (x[off + s] - mean) * is;
        normalized[off + s] = static_cast<T>(xh);
        out[off + s] = static_cast<T>(gamma * xh + beta);
      }
    }
  }
  if (cache != nullptr) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm3d_backward(const Tensor<T>& grad_output, const BatchNormParams<T>& params,
                               const BatchNormCache<T>& cache, std::span<T> gamma_grad, std::span<T> beta_grad) {
  require_same_shape(grad_output, cache.normalized, "batchnorm3d backward");
  const std::size_t N = grad_output.dim(0), C = grad_output.dim(1);
  const std::size_t S = grad_output.dim(2) * grad_output.dim(3) * grad_output.dim(4);
  const double M = static_cast<double>(N * S);
  if (gamma_grad.size() != C || beta_grad.size() != C) throw ShapeError("batchnorm3d gradient buffers");

  Tensor<T> grad_input(grad_output.shape());
  const T* gy = grad_output.data();
  const T* xh = cache.normalized.data();
  for (std::size_t c = 0; c < C; ++c) {
    double sum_gy = 0.0, sum_gy_xh = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        sum_gy += gy[off + s];
        sum_gy_xh += static_cast<double>(gy[off + s]) * xh[off + s];
      }
    }
    gamma_grad[c] += static_cast<T>(sum_gy_xh);
    beta_grad[c] += static_cast<T>(sum_gy);
    const double scale = params.gamma[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        if (cache.mode == Mode::kTrain) {
          grad_input[off + s] = static_cast<T>(scale * (gy[off + s] - sum_gy / M - xh[off + s] * sum_gy_xh / M));
        } else {
          grad_input[off + s] = static_cast<T>(scale * gy[off + s]);
        }
      }
    }
  }
  return grad_input;
}

template <typename T>
Tensor<T> maxpool3d(const Tensor<T>& input, std::vector<std::size_t>* argmax) {
  if (input.rank() != 5) throw ShapeError("maxpool3d input must be [N,C,D,H,W], got " + to_string(input.shape()));
  const std::size_t D = input.dim(2), H = input.dim(3), W = input.dim(4);
  if (D < 2 || H < 2 || W < 2) {
    throw ShapeError("maxpool3d needs every spatial dim >= 2, got " + to_string(input.shape()));
  }
  const std::size_t NC = input.dim(0) * input.dim(1);
  const std::size_t od = D / 2, oh = H / 2, ow = W / 2;
  Tensor<T> out({input.dim(0), input.dim(1), od, oh, ow});
  if (argmax) argmax->assign(out.size(), 0);
  const T* x = input.data();
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < NC; ++nc) {
    const std::size_t base = nc * D * H * W;
    for (std::size_t z = 0; z < od; ++z) {
      for (std::size_t h = 0; h < oh; ++h) {
        for (std::size_t w = 0; w < ow; ++w, ++o) {
          std::size_t best = base + ((2 * z) * H + 2 * h) * W + 2 * w;
          for (std::size_t dz = 0; dz < 2; ++dz)
            for (std::size_t dh = 0; dh < 2; ++dh)
              for (std::size_t dw = 0; dw < 2; ++dw) {
                const std::size_t idx = base + ((2 * z + dz) * H + 2 * h + dh) * W + 2 * w + dw;
                if (x[idx] > x[best]) best = idx;
              }
          out[o] = x[best];
          if (argmax) (*argmax)[o] = best;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> maxpool3d_backward(const Shape& input_shape, const Tensor<T>& grad_output,
                             const std::vector<std::size_t>& argmax) {
  if (argmax.size() != grad_output.size()) throw ShapeError("maxpool3d backward: argmax does not match grad");
  Tensor<T> grad_input(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) grad_input[argmax[o]] += grad_output[o];
  return grad_input;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (input.rank() != 2 || weight.rank() != 2) throw ShapeError("linear expects [N,F] input and [out,F] weight");
  if (input.dim(1) != weight.dim(1)) {
    throw ShapeError("linear feature mismatch: input width " + std::to_string(input.dim(1)) + ", weight expects " +
                     std::to_string(weight.dim(1)));
  }
  if (bias.size() != weight.dim(0)) throw ShapeError("linear bias length does not match outputs");
  const auto N = static_cast<Eigen::Index>(input.dim(0));
  const auto F = static_cast<Eigen::Index>(input.dim(1));
  const auto O = static_cast<Eigen::Index>(weight.dim(0));
  Tensor<T> out({input.dim(0), weight.dim(0)});
  Map<T> ym(out.data(), N, O);
  ym.noalias() = ConstMap<T>(input.data(), N, F) * ConstMap<T>(weight.data(), O, F).transpose();
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data(), O);
  return out;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_output,
                          std::span<T> weight_grad, std::span<T> bias_grad, bool need_input_grad) {
  const auto N = static_cast<Eigen::Index>(input.dim(0));
  const auto F = static_cast<Eigen::Index>(input.dim(1));
  const auto O = static_cast<Eigen::Index>(weight.dim(0));
  if (grad_output.shape() != Shape{input.dim(0), weight.dim(0)}) throw ShapeError("linear grad_output shape");
  if (weight_grad.size() != weight.size() || bias_grad.size() != weight.dim(0)) {
    throw ShapeError("linear gradient buffers do not match parameter shapes");
  }
  const ConstMap<T> gy(grad_output.data(), N, O);
  const ConstMap<T> x(input.data(), N, F);
  Map<T>(weight_grad.data(), O, F).noalias() += gy.transpose() * x;
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_grad.data(), O) += gy.colwise().sum();
  Tensor<T> grad_input;
  if (need_input_grad) {
    grad_input = Tensor<T>(input.shape());
    Map<T>(grad_input.data(), N, F).noalias() = gy * ConstMap<T>(weight.data(), O, F);
  }
  return grad_input;
}

template <typename T>
LossResult<T> mae_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.empty()) throw ShapeError("mae_loss on an empty batch");
  require_same_shape(pred, target, "mae_loss");
  const std::size_t n = pred.size();
  LossResult<T> r{0.0, Tensor<T>(pred.shape())};
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += std::abs(d);
    const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
    r.grad[i] = static_cast<T>(sign / static_cast<double>(n));
  }
  r.loss = sum / static_cast<double>(n);
  return r;
}

#define BRAINAGE_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> conv3d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> conv3d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::span<T>,      \
                                     std::span<T>, bool);                                                     \
  template Tensor<T> relu(const Tensor<T>&);                                                                  \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                       \
  template struct BatchNormParams<T>;                                                                         \
  template Tensor<T> batchnorm3d(const Tensor<T>&, BatchNormParams<T>&, Mode, BatchNormCache<T>*);            \
  template Tensor<T> batchnorm3d_backward(const Tensor<T>&, const BatchNormParams<T>&,                        \
                                          const BatchNormCache<T>&, std::span<T>, std::span<T>);              \
  template Tensor<T> maxpool3d(const Tensor<T>&, std::vector<std::size_t>*);                                  \
  template Tensor<T> maxpool3d_backward(const Shape&, const Tensor<T>&, const std::vector<std::size_t>&);      \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::span<T>,      \
                                     std::span<T>, bool);                                                     \
  template LossResult<T> mae_loss(const Tensor<T>&, const Tensor<T>&);

BRAINAGE_INSTANTIATE_OPS(float)
BRAINAGE_INSTANTIATE_OPS(double)

#undef BRAINAGE_INSTANTIATE_OPS

}  // namespace brainage::nn
