#include "brainage/gpr.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "brainage/error.hpp"

namespace brainage::gpr {

namespace {

constexpr int kMaxJitterDoublings = 8;
constexpr int kLogSMin = -3, kLogSMax = 3;
constexpr int kLogNoiseMin = -4, kLogNoiseMax = 2;

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw ValidationError(std::string(what) + " contains non-finite values");
}

Eigen::VectorXd centered_targets(std::span<const double> ages, std::size_t n, double& mean) {
  if (ages.size() != n) {
    throw ShapeError("gpr: " + std::to_string(ages.size()) + " targets for " + std::to_string(n) + " feature rows");
  }
  if (n < 2) throw ValidationError("gpr: need at least 2 training subjects");
  Eigen::Map<const Eigen::VectorXd> y(ages.data(), static_cast<Eigen::Index>(ages.size()));
  if (!y.allFinite()) throw ValidationError("gpr: ages contain non-finite values");
  mean = y.mean();
  return y.array() - mean;
}

double lml_from_factor(const Factorization& f, const Eigen::VectorXd& y) {
  const auto L = f.lower.triangularView<Eigen::Lower>();
  const Eigen::VectorXd v = L.solve(y);
  const double n = static_cast<double>(y.size());
  return -0.5 * v.squaredNorm() - f.lower.diagonal().array().log().sum() - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd solve(const Factorization& f, const Eigen::VectorXd& y) {
  const auto L = f.lower.triangularView<Eigen::Lower>();
  return L.transpose().solve(L.solve(y));
}

GprModel finish(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, double mean, Hyperparameters hyper) {
  GprModel m;
  m.hyper = hyper;
  m.target_mean = mean;
  m.factor = factorize(k, hyper.s, hyper.sigma2);
  m.alpha = solve(m.factor, y);
  m.log_marginal_likelihood = lml_from_factor(m.factor, y);
  return m;
}

}  // namespace

Eigen::MatrixXd linear_kernel(const FeatureMatrix& x, const FeatureMatrix& z) {
  if (x.cols() != z.cols()) {
    throw ShapeError("linear_kernel: feature counts differ (" + std::to_string(x.cols()) + " vs " +
                     std::to_string(z.cols()) + ")");
  }
  if (x.cols() == 0) throw ShapeError("linear_kernel: no features");
  Eigen::MatrixXd k;
  if (&x == &z) {
    // Gram matrix: one triangle via a rank update, mirrored so K is exactly symmetric.
    k = Eigen::MatrixXd::Zero(x.rows(), x.rows());
    k.selfadjointView<Eigen::Lower>().rankUpdate(x);
    k.triangularView<Eigen::StrictlyUpper>() = k.transpose();
  } else {
    k = x * z.transpose();
  }
  k /= static_cast<double>(x.cols());
  return k;
}

Factorization factorize(const Eigen::MatrixXd& k, double s, double sigma2) {
  if (k.rows() != k.cols()) throw ShapeError("kernel matrix must be square");
  if (!(s > 0.0) || !(sigma2 > 0.0)) throw ValidationError("gpr: s and sigma2 must be positive");
  require_finite(k, "kernel matrix");
  const Eigen::Index n = k.rows();
  Eigen::MatrixXd c = s * k;
  c.diagonal().array() += sigma2;
  double jitter = 0.0;
  const double base = 1e-10 * c.trace() / static_cast<double>(n);
  for (int attempt = 0; attempt <= kMaxJitterDoublings + 1; ++attempt) {
    Eigen::MatrixXd a = c;
    if (jitter > 0.0) a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      return {llt.matrixL(), jitter};
    }
    jitter = jitter == 0.0 ? base : 2.0 * jitter;
  }
  throw NumericError("gpr: kernel matrix is not positive definite after maximum jitter");
}

double log_marginal_likelihood(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, double s, double sigma2) {
  if (y.size() != k.rows()) throw ShapeError("log_marginal_likelihood: target length does not match kernel");
  return lml_from_factor(factorize(k, s, sigma2), y);
}

GprModel gpr_fit(const FeatureMatrix& x, std::span<const double> ages, Hyperparameters hyper) {
  require_finite(x, "feature matrix");
  double mean = 0.0;
  const Eigen::VectorXd y = centered_targets(ages, static_cast<std::size_t>(x.rows()), mean);
  return finish(linear_kernel(x, x), y, mean, hyper);
}

GprModel gpr_fit(const FeatureMatrix& x, std::span<const double> ages) {
  require_finite(x, "feature matrix");
  double mean = 0.0;
  const Eigen::VectorXd y = centered_targets(ages, static_cast<std::size_t>(x.rows()), mean);
  const Eigen::MatrixXd k = linear_kernel(x, x);

  auto evaluate = [&](double log_s, double log_n) {
    try {
      return log_marginal_likelihood(k, y, std::pow(10.0, log_s), std::pow(10.0, log_n));
    } catch (const NumericError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  double best_s = 0.0, best_n = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (int i = kLogSMin; i <= kLogSMax; ++i) {
    for (int j = kLogNoiseMin; j <= kLogNoiseMax; ++j) {
      const double v = evaluate(i, j);
      if (v > best) {
        best = v;
        best_s = i;
        best_n = j;
      }
    }
  }
  if (!std::isfinite(best)) throw NumericError("gpr: no grid point gave a finite marginal likelihood");

  // One refinement pass per step size around the incumbent, kept inside the
  // search box.
  for (double step : {0.5, 0.25}) {
    const double cs = best_s, cn = best_n;
    for (int di = -1; di <= 1; ++di) {
      for (int dj = -1; dj <= 1; ++dj) {
        const double ls = cs + di * step, ln = cn + dj * step;
        if ((di == 0 && dj == 0) || ls < kLogSMin || ls > kLogSMax || ln < kLogNoiseMin || ln > kLogNoiseMax) continue;
        const double v = evaluate(ls, ln);
        if (v > best) {
          best = v;
          best_s = ls;
          best_n = ln;
        }
      }
    }
  }
  return finish(k, y, mean, {std::pow(10.0, best_s), std::pow(10.0, best_n)});
}

Eigen::VectorXd gpr_predict(const GprModel& model, const FeatureMatrix& x_train, const FeatureMatrix& x_new) {
  if (x_train.rows() != model.alpha.size()) throw ShapeError("gpr_predict: training rows do not match the model");
  require_finite(x_new, "feature matrix");
  Eigen::VectorXd out = model.hyper.s * (linear_kernel(x_new, x_train) * model.alpha);
  out.array() += model.target_mean;
  return out;
}

}  // namespace brainage::gpr
