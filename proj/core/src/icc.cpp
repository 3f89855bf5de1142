#include "brainage/icc.hpp"

#include <cmath>
#include <limits>
#include <map>

#include <boost/math/distributions/fisher_f.hpp>

#include "brainage/error.hpp"

namespace brainage::stats {

namespace {

double f_quantile(double p, double df1, double df2) {
  boost::math::fisher_f_distribution<double> dist(df1, df2);
  return boost::math::quantile(dist, p);
}

}  // namespace

IccResult icc_2_1(const Eigen::MatrixXd& ratings) {
  const auto n = static_cast<std::size_t>(ratings.rows());
  const auto k = static_cast<std::size_t>(ratings.cols());
  if (n < 3) throw ValidationError("icc_2_1: need at least 3 targets");
  if (k < 2) throw ValidationError("icc_2_1: need at least 2 raters");
  if (!ratings.allFinite()) throw ValidationError("icc_2_1: ratings contain non-finite values");

  const double nd = static_cast<double>(n), kd = static_cast<double>(k);
  const double grand = ratings.mean();
  const Eigen::VectorXd row_means = ratings.rowwise().mean();
  const Eigen::RowVectorXd col_means = ratings.colwise().mean();
  const double ss_rows = kd * (row_means.array() - grand).square().sum();
  const double ss_cols = nd * (col_means.array() - grand).square().sum();
  const double ss_total = (ratings.array() - grand).square().sum();
  const double ss_err = std::max(0.0, ss_total - ss_rows - ss_cols);

  IccResult r;
  r.n_targets = n;
  r.n_raters = k;
  r.bms = ss_rows / (nd - 1.0);
  r.jms = ss_cols / (kd - 1.0);
  r.ems = ss_err / ((nd - 1.0) * (kd - 1.0));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (r.bms == 0.0 && r.ems == 0.0) {
    r.defined = false;
    r.icc = r.ci_low = r.ci_high = nan;
    return r;
  }
  const double bms = r.bms, jms = r.jms, ems = r.ems;
  r.icc = (bms - ems) / (bms + (kd - 1.0) * ems + kd * (jms - ems) / nd);

  // Approximate denominator degrees of freedom for the lower F bound.
  const double icc = r.icc;
  double v = kd - 1.0;  // limit as the residual mean square vanishes
  if (ems > 0.0) {
    const double fj = jms / ems;
    const double t = nd * (1.0 + (kd - 1.0) * icc) - kd * icc;
    const double num = (kd - 1.0) * (nd - 1.0) * std::pow(kd * icc * fj + t, 2);
    const double den = (nd - 1.0) * kd * kd * icc * icc * fj * fj + t * t;
    if (den > 0.0) v = num / den;
  }
  const double f_upper = f_quantile(0.975, nd - 1.0, v);
  const double f_lower = f_quantile(0.975, v, nd - 1.0);
  r.ci_low = nd * (bms - f_upper * ems) / (f_upper * (kd * jms + (kd * nd - kd - nd) * ems) + nd * bms);
  r.ci_high = nd * (f_lower * bms - ems) / (kd * jms + (kd * nd - kd - nd) * ems + nd * f_lower * bms);
  return r;
}

IccResult reliability_report(std::span<const PredictionRecord> session_a, std::span<const PredictionRecord> session_b) {
  std::map<std::string, double> b_pad;
  for (const auto& r : session_b) {
    if (!b_pad.emplace(r.subject_id, r.brain_pad).second) {
      throw ValidationError("reliability_report: duplicate subject_id " + r.subject_id + " in second session");
    }
  }
  std::map<std::string, double> a_pad;
  for (const auto& r : session_a) {
    if (!a_pad.emplace(r.subject_id, r.brain_pad).second) {
      throw ValidationError("reliability_report: duplicate subject_id " + r.subject_id + " in first session");
    }
  }
  std::string unmatched;
  for (const auto& [id, _] : a_pad) {
    if (!b_pad.count(id)) unmatched += (unmatched.empty() ? "" : ",") + id;
  }
  for (const auto& [id, _] : b_pad) {
    if (!a_pad.count(id)) unmatched += (unmatched.empty() ? "" : ",") + id;
  }
  if (!unmatched.empty()) throw ValidationError("reliability_report: unmatched subject ids: " + unmatched);

  Eigen::MatrixXd m(static_cast<Eigen::Index>(a_pad.size()), 2);
  Eigen::Index i = 0;
  for (const auto& [id, pad] : a_pad) {
    m(i, 0) = pad;
    m(i, 1) = b_pad.at(id);
    ++i;
  }
  return icc_2_1(m);
}

}  // namespace brainage::stats
