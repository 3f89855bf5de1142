#include "brainage/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "brainage/error.hpp"

namespace brainage::stats {

namespace {

void require_pairs(std::span<const double> a, std::span<const double> b, std::size_t min_n, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": lengths differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  if (a.size() < min_n) throw ValidationError(std::string(what) + ": need at least " + std::to_string(min_n) + " values");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) {
      throw ValidationError(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace

double pearson_r(std::span<const double> x, std::span<const double> y) {
  require_pairs(x, y, 2, "pearson_r");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

MetricsReport compute_metrics(std::span<const double> predicted, std::span<const double> actual) {
  require_pairs(predicted, actual, 2, "compute_metrics");
  MetricsReport m;
  m.n = predicted.size();
  const double n = static_cast<double>(m.n);
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < m.n; ++i) {
    const double d = predicted[i] - actual[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);

  const double ma = mean(actual);
  double ss_tot = 0.0;
  for (double a : actual) ss_tot += (a - ma) * (a - ma);
  m.pearson_r = pearson_r(predicted, actual);
  m.correlation_defined = !std::isnan(m.pearson_r);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  m.r_squared = m.correlation_defined ? m.pearson_r * m.pearson_r : nan;
  m.r_squared_ss = ss_tot > 0.0 ? 1.0 - sq_sum / ss_tot : nan;
  return m;
}

std::vector<PredictionRecord> brain_pad(std::vector<PredictionRecord> records) {
  for (auto& r : records) r.brain_pad = r.predicted_age - r.chronological_age;
  return records;
}

std::vector<double> age_correct(std::span<const double> scores, std::span<const double> ages) {
  require_pairs(scores, ages, 3, "age_correct");
  const double ms = mean(scores), ma = mean(ages);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < ages.size(); ++i) {
    sxy += (ages[i] - ma) * (scores[i] - ms);
    sxx += (ages[i] - ma) * (ages[i] - ma);
  }
  if (sxx == 0.0) throw ValidationError("age_correct: ages are constant");
  const double slope = sxy / sxx;
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - ms) - slope * (ages[i] - ma);
  return out;
}

}  // namespace brainage::stats
