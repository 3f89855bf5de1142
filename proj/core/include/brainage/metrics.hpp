#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace brainage::stats {

struct MetricsReport {
  std::size_t n = 0;
  double mae = 0.0;
  double rmse = 0.0;
  /// NaN when correlation_defined is false (constant predictions or ages).
  double pearson_r = 0.0;
  /// Headline R^2, the squared Pearson correlation.
  double r_squared = 0.0;
  /// 1 - SS_res / SS_tot, reported alongside.
  double r_squared_ss = 0.0;
  bool correlation_defined = true;
};

MetricsReport compute_metrics(std::span<const double> predicted, std::span<const double> actual);

double pearson_r(std::span<const double> x, std::span<const double> y);

struct PredictionRecord {
  std::string subject_id;
  double chronological_age = 0.0;
  double predicted_age = 0.0;
  double brain_pad = 0.0;
  std::optional<std::string> site;
  std::optional<int> session;
};

/// Fills brain_pad = predicted_age - chronological_age.
std::vector<PredictionRecord> brain_pad(std::vector<PredictionRecord> records);

/// Ordinary least-squares residuals of scores on [1, age].
std::vector<double> age_correct(std::span<const double> scores, std::span<const double> ages);

}  // namespace brainage::stats
