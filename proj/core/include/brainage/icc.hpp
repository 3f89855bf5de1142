#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "brainage/metrics.hpp"

namespace brainage::stats {

struct IccResult {
  double icc = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_targets = 0;
  std::size_t n_raters = 0;
  /// Mean squares of the two-way ANOVA: between targets, between raters, residual.
  double bms = 0.0;
  double jms = 0.0;
  double ems = 0.0;
  /// False for an all-constant matrix; icc and the interval are then NaN.
  bool defined = true;
};

/// ICC(2,1): two-way random effects, absolute agreement, single rater, with
/// the 95% Shrout-Fleiss F-based confidence interval. ratings is
/// n_targets x k_raters.
IccResult icc_2_1(const Eigen::MatrixXd& ratings);

/// ICC(2,1) of brain-PAD between two sessions (or scanners), matching
/// records by subject_id. Throws ValidationError listing unmatched ids.
IccResult reliability_report(std::span<const PredictionRecord> session_a, std::span<const PredictionRecord> session_b);

}  // namespace brainage::stats
