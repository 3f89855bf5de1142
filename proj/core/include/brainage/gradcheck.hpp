#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "brainage/layers.hpp"
#include "brainage/network.hpp"

namespace brainage::nn {

struct GradcheckOptions {
  /// Seeds the fixed random projection used as the scalar loss.
  std::uint64_t seed = 0;
  /// Entries probed per tensor (evenly strided); 0 probes every entry.
  std::size_t max_probes_per_tensor = 0;
  /// Also check the gradient with respect to the input.
  bool check_input = true;
};

struct GradcheckEntry {
  std::string name;
  std::size_t probed = 0;
  /// ||analytic - numeric|| / max(||analytic||, ||numeric||, floor) over the
  /// probed entries, with floor = 1e-4 * norm of the whole analytic gradient.
  double rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::string label;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  bool passed = true;
  std::vector<GradcheckEntry> entries;
};

/// Central differences with step 1e-5 * (|theta| + 1) against analytic
/// gradients. `loss` evaluates the scalar objective; `analytic` must leave
/// d loss / d theta in the gradient buffers of `tensors` (zeroed first).
GradcheckReport gradcheck(const std::function<double()>& loss, const std::function<void()>& analytic,
                          const std::vector<Parameter<double>>& tensors, double tolerance,
                          std::size_t max_probes_per_tensor = 0);

/// Checks a layer stack in train mode under the loss sum_i w_i * out_i with
/// w a fixed seeded normal projection.
GradcheckReport gradcheck(Sequential<double>& fragment, const Tensor<double>& input, double tolerance,
                          const GradcheckOptions& options = {});

/// Same for a whole (possibly fused) network; the input tensors are not probed.
GradcheckReport gradcheck(model::Network<double>& network, const std::vector<Tensor<double>>& inputs,
                          double tolerance, const GradcheckOptions& options = {});

/// Checks the gradient of mae_loss with respect to its predictions.
GradcheckReport gradcheck_mae(const Tensor<double>& pred, const Tensor<double>& target, double tolerance);

/// Per-layer suite: conv3d, relu, batchnorm3d, maxpool3d, linear, mae_loss
/// and a 2-block network. Smooth layers use the tighter tolerance.
std::vector<GradcheckReport> run_gradient_suite(std::uint64_t seed, double tolerance = 1e-4,
                                                double smooth_tolerance = 1e-7);

}  // namespace brainage::nn
