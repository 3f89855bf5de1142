#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

namespace brainage::gpr {

/// One subject per row, one voxel feature per column.
using FeatureMatrix = Eigen::MatrixXd;

/// K[i, j] = x_i . z_j / F.
Eigen::MatrixXd linear_kernel(const FeatureMatrix& x, const FeatureMatrix& z);

/// Cholesky factor of s K + sigma2 I. Factorization is first attempted as
/// is; on failure a jitter of 1e-10 * trace / N is added to the diagonal and
/// doubled up to 8 times before giving up with NumericError.
struct Factorization {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};
Factorization factorize(const Eigen::MatrixXd& k, double s, double sigma2);

/// log N(y | 0, s K + sigma2 I).
double log_marginal_likelihood(const Eigen::MatrixXd& k, const Eigen::VectorXd& y, double s, double sigma2);

struct Hyperparameters {
  double s = 1.0;
  double sigma2 = 1.0;
};

struct GprModel {
  Hyperparameters hyper;
  double target_mean = 0.0;
  Eigen::VectorXd alpha;
  Factorization factor;
  double log_marginal_likelihood = 0.0;
};

/// Maximizes the marginal likelihood over a 7 x 7 log10 grid
/// (s in 1e-3..1e3, sigma2 in 1e-4..1e2), then one pass over the
/// neighbours of the incumbent at half-decade and at quarter-decade steps,
/// staying inside those bounds.
GprModel gpr_fit(const FeatureMatrix& x, std::span<const double> ages);
/// Fit with fixed hyperparameters.
GprModel gpr_fit(const FeatureMatrix& x, std::span<const double> ages, Hyperparameters hyper);

/// s k(x_new, x_train) alpha + mean(train ages).
Eigen::VectorXd gpr_predict(const GprModel& model, const FeatureMatrix& x_train, const FeatureMatrix& x_new);

}  // namespace brainage::gpr
