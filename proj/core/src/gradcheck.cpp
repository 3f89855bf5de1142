#include "brainage/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "brainage/error.hpp"
#include "brainage/random.hpp"

namespace brainage::nn {

namespace {

// Tensors whose gradient norm is below this fraction of the whole problem's
// gradient norm (e.g. a conv bias feeding batchnorm, exactly zero) are
// compared against that floor instead of their own near-zero norm.
constexpr double kNegligibleFraction = 1e-4;

Tensor<double> random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, sd);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

double project(const Tensor<double>& out, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
  return s;
}

std::vector<double> projection(std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x960));
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> w(n);
  for (auto& v : w) v = dist(rng);
  return w;
}

}  // namespace

GradcheckReport gradcheck(const std::function<double()>& loss, const std::function<void()>& analytic,
                          const std::vector<Parameter<double>>& tensors, double tolerance,
                          std::size_t max_probes_per_tensor) {
  for (const auto& p : tensors) {
    p.tensor->ensure_grad();
    p.tensor->zero_grad();
  }
  analytic();
  std::vector<std::vector<double>> grads;
  grads.reserve(tensors.size());
  for (const auto& p : tensors) grads.emplace_back(p.tensor->grad().begin(), p.tensor->grad().end());

  struct Probe {
    std::vector<double> analytic, numeric;
  };
  std::vector<Probe> probes(tensors.size());
  double global_sq = 0.0;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    auto values = tensors[t].tensor->values();
    const std::size_t n = values.size();
    const std::size_t stride =
        max_probes_per_tensor == 0 || n <= max_probes_per_tensor ? 1 : (n + max_probes_per_tensor - 1) / max_probes_per_tensor;
    for (std::size_t i = 0; i < n; i += stride) {
      const double theta = values[i];
      const double h = 1e-5 * (std::abs(theta) + 1.0);
      values[i] = theta + h;
      const double up = loss();
      values[i] = theta - h;
      const double down = loss();
      values[i] = theta;
      probes[t].numeric.push_back((up - down) / (2.0 * h));
      probes[t].analytic.push_back(grads[t][i]);
      global_sq += grads[t][i] * grads[t][i];
    }
  }

  GradcheckReport report;
  report.tolerance = tolerance;
  const double floor = kNegligibleFraction * std::sqrt(global_sq);
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    GradcheckEntry entry;
    entry.name = tensors[t].name;
    entry.probed = probes[t].analytic.size();
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t i = 0; i < entry.probed; ++i) {
      const double a = probes[t].analytic[i], n = probes[t].numeric[i];
      diff_sq += (a - n) * (a - n);
      a_sq += a * a;
      n_sq += n * n;
      entry.max_abs_error = std::max(entry.max_abs_error, std::abs(a - n));
    }
    const double denom = std::max({std::sqrt(a_sq), std::sqrt(n_sq), floor, 1e-300});
    entry.rel_error = std::sqrt(diff_sq) / denom;
    entry.passed = entry.rel_error < tolerance;
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    report.passed = report.passed && entry.passed;
    report.entries.push_back(entry);
  }
  return report;
}

GradcheckReport gradcheck(Sequential<double>& fragment, const Tensor<double>& input, double tolerance,
                          const GradcheckOptions& options) {
  Tensor<double> x = input;
  const Tensor<double> probe_out = fragment.forward(x, Mode::kTrain);
  const std::vector<double> w = projection(probe_out.size(), options.seed);
  fragment.clear_activations();

  auto loss = [&] {
    const double l = project(fragment.forward(x, Mode::kTrain), w);
    fragment.clear_activations();
    return l;
  };
  std::vector<Parameter<double>> tensors = fragment.parameters();
  if (options.check_input) tensors.push_back({"input", &x});
  auto analytic = [&] {
    const Tensor<double> out = fragment.forward(x, Mode::kTrain);
    Tensor<double> g(out.shape());
    std::copy(w.begin(), w.end(), g.data());
    const Tensor<double> gx = fragment.backward(g, options.check_input);
    if (options.check_input) {
      auto dst = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
    }
  };
  return gradcheck(loss, analytic, tensors, tolerance, options.max_probes_per_tensor);
}

GradcheckReport gradcheck(model::Network<double>& network, const std::vector<Tensor<double>>& inputs,
                          double tolerance, const GradcheckOptions& options) {
  const std::vector<double> w = projection(inputs.at(0).dim(0), options.seed);
  auto loss = [&] { return project(network.forward(inputs, Mode::kTrain), w); };
  auto analytic = [&] {
    const Tensor<double> out = network.forward(inputs, Mode::kTrain);
    Tensor<double> g(out.shape());
    std::copy(w.begin(), w.end(), g.data());
    network.backward(g);
  };
  return gradcheck(loss, analytic, network.parameters(), tolerance, options.max_probes_per_tensor);
}

GradcheckReport gradcheck_mae(const Tensor<double>& pred, const Tensor<double>& target, double tolerance) {
  Tensor<double> p = pred;
  auto loss = [&] { return mae_loss(p, target).loss; };
  auto analytic = [&] {
    const auto r = mae_loss(p, target);
    auto dst = p.grad();
    for (std::size_t i = 0; i < r.grad.size(); ++i) dst[i] += r.grad[i];
  };
  return gradcheck(loss, analytic, {{"pred", &p}}, tolerance);
}

std::vector<GradcheckReport> run_gradient_suite(std::uint64_t seed, double tolerance, double smooth_tolerance) {
  std::vector<GradcheckReport> out;
  Rng rng(derive_seed(seed, 0x5017E));
  auto labelled = [&](GradcheckReport r, const char* label) {
    r.label = label;
    out.push_back(std::move(r));
  };

  {
    Sequential<double> s;
    auto conv = std::make_unique<Conv3d<double>>(2, 3);
    conv->initialize(rng);
    for (auto& b : conv->bias.values()) b = std::normal_distribution<double>(0.0, 0.1)(rng);
    s.add(std::move(conv), "conv");
    labelled(gradcheck(s, random_tensor({2, 2, 4, 5, 3}, rng), tolerance, {.seed = seed}), "conv3d");
  }
  {
    Sequential<double> s;
    s.add(std::make_unique<Relu<double>>(), "relu");
    // Inputs bounded away from the kink.
    Tensor<double> x = random_tensor({2, 2, 3, 3, 3}, rng);
    for (auto& v : x.values()) v += v >= 0 ? 0.1 : -0.1;
    labelled(gradcheck(s, x, tolerance, {.seed = seed}), "relu");
  }
  {
    Sequential<double> s;
    auto bn = std::make_unique<BatchNorm3d<double>>(3);
    for (auto& g : bn->params.gamma.values()) g = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    for (auto& b : bn->params.beta.values()) b = std::normal_distribution<double>(0.0, 0.5)(rng);
    s.add(std::move(bn), "batchnorm");
    labelled(gradcheck(s, random_tensor({2, 3, 3, 4, 3}, rng), smooth_tolerance, {.seed = seed}), "batchnorm3d");
  }
  {
    Sequential<double> s;
    s.add(std::make_unique<MaxPool3d<double>>(), "pool");
    labelled(gradcheck(s, random_tensor({2, 2, 4, 5, 4}, rng), tolerance, {.seed = seed}), "maxpool3d");
  }
  {
    Sequential<double> s;
    auto lin = std::make_unique<Linear<double>>(7, 3);
    lin->initialize(rng);
    for (auto& b : lin->bias.values()) b = std::normal_distribution<double>(0.0, 0.1)(rng);
    s.add(std::move(lin), "linear");
    labelled(gradcheck(s, random_tensor({4, 7}, rng), smooth_tolerance, {.seed = seed}), "linear");
  }
  {
    Tensor<double> pred = random_tensor({6, 1}, rng, 10.0);
    Tensor<double> target = random_tensor({6, 1}, rng, 10.0);
    labelled(gradcheck_mae(pred, target, smooth_tolerance), "mae_loss");
  }
  {
    model::ArchitectureSpec spec;
    spec.input_dims = {8, 8, 8};
    spec.base_feature_maps = 2;
    spec.num_blocks = 2;
    auto net = model::build_single_branch(spec, derive_seed(seed, 0xC0)).cast<double>();
    std::vector<Tensor<double>> inputs{random_tensor({3, 1, 8, 8, 8}, rng)};
    labelled(gradcheck(net, inputs, tolerance, {.seed = seed}), "network_2_block");
  }
  return out;
}

}  // namespace brainage::nn
