#include "brainage/twin.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "brainage/error.hpp"
#include "brainage/random.hpp"

namespace brainage::stats {

const char* to_string(Zygosity z) { return z == Zygosity::kMZ ? "MZ" : "DZ"; }

const char* to_string(VarianceModel m) {
  switch (m) {
    case VarianceModel::kACE: return "ACE";
    case VarianceModel::kAE: return "AE";
    case VarianceModel::kE: return "E";
  }
  return "unknown";
}

namespace {

constexpr double kLogLikTolerance = 1e-9;
constexpr double kBoundary = 1e-8;

// Sufficient statistics of one zygosity group.
struct Group {
  double n = 0.0;
  double m1 = 0.0, m2 = 0.0;
  double s11 = 0.0, s22 = 0.0, s12 = 0.0;  // scatter about the group means
};

struct Data {
  Group mz, dz;
};

Data summarize(std::span<const TwinPair> pairs, const std::vector<std::size_t>* index = nullptr) {
  Data d;
  auto add = [](Group& g, const TwinPair& p) {
    // Welford-style running update of the means and scatter.
    g.n += 1.0;
    const double d1 = p.phenotype_1 - g.m1, d2 = p.phenotype_2 - g.m2;
    g.m1 += d1 / g.n;
    g.m2 += d2 / g.n;
    g.s11 += d1 * (p.phenotype_1 - g.m1);
    g.s22 += d2 * (p.phenotype_2 - g.m2);
    g.s12 += d1 * (p.phenotype_2 - g.m2);
  };
  const std::size_t n = index ? index->size() : pairs.size();
  for (std::size_t i = 0; i < n; ++i) {
    const TwinPair& p = pairs[index ? (*index)[i] : i];
    add(p.zygosity == Zygosity::kMZ ? d.mz : d.dz, p);
  }
  return d;
}

struct Components {
  double a2 = 0.0, c2 = 0.0, e2 = 0.0;
};

std::size_t free_components(VarianceModel m) {
  return m == VarianceModel::kACE ? 3 : m == VarianceModel::kAE ? 2 : 1;
}

Components unpack(VarianceModel m, const std::vector<double>& theta) {
  Components c;
  switch (m) {
    case VarianceModel::kACE: c = {std::exp(theta[0]), std::exp(theta[1]), std::exp(theta[2])}; break;
    case VarianceModel::kAE: c = {std::exp(theta[0]), 0.0, std::exp(theta[1])}; break;
    case VarianceModel::kE: c = {0.0, 0.0, std::exp(theta[0])}; break;
  }
  return c;
}

std::vector<double> pack(VarianceModel m, const Components& c, double floor) {
  auto lg = [floor](double x) { return std::log(std::max(x, floor)); };
  switch (m) {
    case VarianceModel::kACE: return {lg(c.a2), lg(c.c2), lg(c.e2)};
    case VarianceModel::kAE: return {lg(c.a2), lg(c.e2)};
    case VarianceModel::kE: return {lg(c.e2)};
  }
  return {};
}

// Profile maximum-likelihood mean for fixed covariance.
double profile_mean(const Data& d, const Components& c) {
  const double v = c.a2 + c.c2 + c.e2;
  const double cov_mz = c.a2 + c.c2, cov_dz = 0.5 * c.a2 + c.c2;
  double num = 0.0, den = 0.0;
  for (const auto& [g, cov] : {std::pair{&d.mz, cov_mz}, std::pair{&d.dz, cov_dz}}) {
    if (g->n == 0.0) continue;
    num += g->n * (g->m1 + g->m2) / (v + cov);
    den += g->n * 2.0 / (v + cov);
  }
  return num / den;
}

double group_loglik(const Group& g, double v, double cov, double mu) {
  if (g.n == 0.0) return 0.0;
  const double det = v * v - cov * cov;
  if (!(det > 0.0)) return -std::numeric_limits<double>::infinity();
  const double d1 = g.m1 - mu, d2 = g.m2 - mu;
  const double s11 = g.s11 + g.n * d1 * d1, s22 = g.s22 + g.n * d2 * d2, s12 = g.s12 + g.n * d1 * d2;
  const double quad = (v * (s11 + s22) - 2.0 * cov * s12) / det;
  return -g.n * std::log(2.0 * std::numbers::pi) - 0.5 * g.n * std::log(det) - 0.5 * quad;
}

double loglik(const Data& d, const Components& c, double* mean_out = nullptr) {
  const double mu = profile_mean(d, c);
  if (mean_out) *mean_out = mu;
  const double v = c.a2 + c.c2 + c.e2;
  return group_loglik(d.mz, v, c.a2 + c.c2, mu) + group_loglik(d.dz, v, 0.5 * c.a2 + c.c2, mu);
}

struct NmResult {
  std::vector<double> x;
  double f = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

template <typename F>
NmResult nelder_mead(const F& f, std::vector<double> x0, double step, std::size_t max_iterations) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> s(n + 1, x0);
  std::vector<double> fs(n + 1);
  for (std::size_t i = 0; i < n; ++i) s[i + 1][i] += step;
  for (std::size_t i = 0; i <= n; ++i) fs[i] = f(s[i]);

  NmResult r;
  std::vector<std::size_t> order(n + 1);
  for (; r.iterations < max_iterations; ++r.iterations) {
    for (std::size_t i = 0; i <= n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    const std::size_t best = order[0], worst = order[n], second = order[n - 1];
    double extent = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t j = 0; j < n; ++j) extent = std::max(extent, std::abs(s[i][j] - s[best][j]));
    }
    if (fs[worst] - fs[best] <= kLogLikTolerance && extent < 1e-6) {
      r.converged = true;
      break;
    }
    // Flat directions (a component driven towards zero) stop moving the
    // objective long before the simplex shrinks.
    if (fs[worst] - fs[best] <= 1e-12) {
      r.converged = true;
      break;
    }
    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == worst) continue;
      for (std::size_t j = 0; j < n; ++j) centroid[j] += s[i][j] / static_cast<double>(n);
    }
    auto along = [&](double t) {
      std::vector<double> p(n);
      for (std::size_t j = 0; j < n; ++j) p[j] = centroid[j] + t * (s[worst][j] - centroid[j]);
      return p;
    };
    auto xr = along(-1.0);
    const double fr = f(xr);
    if (fr < fs[best]) {
      auto xe = along(-2.0);
      const double fe = f(xe);
      if (fe < fr) {
        s[worst] = xe;
        fs[worst] = fe;
      } else {
        s[worst] = xr;
        fs[worst] = fr;
      }
      continue;
    }
    if (fr < fs[second]) {
      s[worst] = xr;
      fs[worst] = fr;
      continue;
    }
    const bool outside = fr < fs[worst];
    auto xc = along(outside ? -0.5 : 0.5);
    const double fc = f(xc);
    if (fc < (outside ? fr : fs[worst])) {
      s[worst] = xc;
      fs[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      for (std::size_t j = 0; j < n; ++j) s[i][j] = s[best][j] + 0.5 * (s[i][j] - s[best][j]);
      fs[i] = f(s[i]);
    }
  }
  const std::size_t best = static_cast<std::size_t>(std::min_element(fs.begin(), fs.end()) - fs.begin());
  r.x = s[best];
  r.f = fs[best];
  return r;
}

void check_counts(const Data& d, VarianceModel m) {
  if (m == VarianceModel::kE) {
    if (d.mz.n + d.dz.n < 2) throw ValidationError("twin fit: the E model needs at least 2 pairs");
    return;
  }
  if (d.mz.n < 2 || d.dz.n < 2) {
    throw ValidationError("twin fit: ACE and AE models need at least 2 MZ and 2 DZ pairs (have " +
                          std::to_string(static_cast<std::size_t>(d.mz.n)) + " MZ, " +
                          std::to_string(static_cast<std::size_t>(d.dz.n)) + " DZ)");
  }
}

// Moment-based starting values: Falconer estimates plus fixed proportions
// of the total variance.
std::vector<Components> moment_starts(const Data& d) {
  const double n = d.mz.n + d.dz.n;
  const double grand = (d.mz.n * (d.mz.m1 + d.mz.m2) + d.dz.n * (d.dz.m1 + d.dz.m2)) / (2.0 * n);
  double ss = 0.0;
  for (const Group* g : {&d.mz, &d.dz}) {
    ss += g->s11 + g->s22 + g->n * ((g->m1 - grand) * (g->m1 - grand) + (g->m2 - grand) * (g->m2 - grand));
  }
  const double v = std::max(ss / (2.0 * n), 1e-12);
  auto icc = [](const Group& g) {
    const double denom = g.s11 + g.s22;
    return g.n > 1.0 && denom > 0.0 ? 2.0 * g.s12 / denom : 0.0;
  };
  const double r_mz = icc(d.mz), r_dz = icc(d.dz);
  const double floor = 1e-3 * v;
  const Components falconer{std::max(2.0 * (r_mz - r_dz) * v, floor), std::max((2.0 * r_dz - r_mz) * v, floor),
                            std::max((1.0 - r_mz) * v, floor)};
  return {falconer,
          {v / 3.0, v / 3.0, v / 3.0},
          {0.8 * v, 0.1 * v, 0.1 * v},
          {0.1 * v, 0.8 * v, 0.1 * v},
          {0.1 * v, 0.1 * v, 0.8 * v}};
}

AceFit fit_one(const Data& d, VarianceModel model, const std::vector<Components>& starts,
               const std::optional<Components>& warm, std::size_t max_iterations) {
  check_counts(d, model);
  auto objective = [&](const std::vector<double>& theta) {
    const double ll = loglik(d, unpack(model, theta));
    return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
  };
  // starts[1] splits the total variance into equal thirds.
  const double total = std::max(3.0 * starts[1].a2, 1e-12);
  NmResult best;
  best.f = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  std::vector<std::vector<double>> inits;
  if (warm) inits.push_back(pack(model, *warm, 1e-12 * total));
  for (const auto& s : starts) inits.push_back(pack(model, s, 1e-12 * total));
  for (const auto& x0 : inits) {
    NmResult r = nelder_mead(objective, x0, 1.0, max_iterations);
    // A restart from the optimum guards against a collapsed simplex.
    for (int k = 0; k < 3 && r.converged; ++k) {
      NmResult again = nelder_mead(objective, r.x, 0.5, max_iterations);
      if (!again.converged || again.f > r.f - kLogLikTolerance) {
        if (again.converged && again.f < r.f) r = again;
        break;
      }
      r = again;
    }
    any_converged = any_converged || r.converged;
    if (r.f < best.f) best = r;
  }
  if (!any_converged || !std::isfinite(best.f)) {
    throw NumericError(std::string("twin fit: ") + to_string(model) + " optimizer did not converge after " +
                       std::to_string(max_iterations) + " iterations from " + std::to_string(inits.size()) +
                       " starts (best -lnL " + std::to_string(best.f) + ")");
  }
  const Components c = unpack(model, best.x);
  AceFit fit;
  fit.model = model;
  fit.a2 = c.a2;
  fit.c2 = c.c2;
  fit.e2 = c.e2;
  fit.log_likelihood = loglik(d, c, &fit.mean);
  fit.aic = 2.0 * static_cast<double>(1 + free_components(model)) - 2.0 * fit.log_likelihood;
  fit.boundary = fit.e2 < kBoundary;
  fit.n_mz = static_cast<std::size_t>(d.mz.n);
  fit.n_dz = static_cast<std::size_t>(d.dz.n);
  if (model == VarianceModel::kAE) fit.h2 = fit.a2 / (fit.a2 + fit.e2);
  if (model == VarianceModel::kE) {
    fit.h2 = 0.0;
    fit.h2_se = 0.0;
  }
  return fit;
}

Components components_of(const AceFit& f) { return {f.a2, f.c2, f.e2}; }

// The parent optimum sits on the boundary of the child's space (the dropped
// component at exactly 0), which the log parameterization can only approach.
// When the child's search ends below it, the boundary point is the child's MLE.
void keep_parent_if_better(AceFit& child, const AceFit& parent) {
  if (child.log_likelihood >= parent.log_likelihood) return;
  const double k = static_cast<double>(1 + free_components(child.model));
  child.a2 = parent.a2;
  child.c2 = parent.c2;
  child.e2 = parent.e2;
  child.mean = parent.mean;
  child.log_likelihood = parent.log_likelihood;
  child.aic = 2.0 * k - 2.0 * child.log_likelihood;
  child.boundary = child.e2 < kBoundary;
  if (child.model == VarianceModel::kAE) child.h2 = child.a2 / (child.a2 + child.e2);
}

NestedFits fit_chain(const Data& d, std::size_t max_iterations, VarianceModel deepest) {
  const auto starts = moment_starts(d);
  NestedFits out;
  out.e = fit_one(d, VarianceModel::kE, starts, std::nullopt, max_iterations);
  if (deepest == VarianceModel::kE) return out;
  out.ae = fit_one(d, VarianceModel::kAE, starts, components_of(out.e), max_iterations);
  keep_parent_if_better(out.ae, out.e);
  if (deepest == VarianceModel::kAE) return out;
  out.ace = fit_one(d, VarianceModel::kACE, starts, components_of(out.ae), max_iterations);
  keep_parent_if_better(out.ace, out.ae);
  return out;
}

void bootstrap_h2(std::span<const TwinPair> pairs, AceFit& fit, const FitOptions& options) {
  if (options.bootstrap_resamples == 0) return;
  std::vector<std::size_t> mz, dz;
  for (std::size_t i = 0; i < pairs.size(); ++i) (pairs[i].zygosity == Zygosity::kMZ ? mz : dz).push_back(i);
  const auto starts_base = components_of(fit);
  std::vector<double> h2s;
  h2s.reserve(options.bootstrap_resamples);
  std::vector<std::size_t> idx(pairs.size());
  for (std::size_t b = 0; b < options.bootstrap_resamples; ++b) {
    Rng rng(derive_seed(options.seed, b));
    std::size_t k = 0;
    for (const auto* group : {&mz, &dz}) {
      std::uniform_int_distribution<std::size_t> pick(0, group->size() - 1);
      for (std::size_t i = 0; i < group->size(); ++i) idx[k++] = (*group)[pick(rng)];
    }
    const Data d = summarize(pairs, &idx);
    const AceFit f = fit_one(d, VarianceModel::kAE, moment_starts(d), starts_base, options.max_iterations);
    h2s.push_back(*f.h2);
  }
  double mean = 0.0;
  for (double h : h2s) mean += h;
  mean /= static_cast<double>(h2s.size());
  double ss = 0.0;
  for (double h : h2s) ss += (h - mean) * (h - mean);
  fit.h2_se = h2s.size() > 1 ? std::sqrt(ss / static_cast<double>(h2s.size() - 1)) : 0.0;
}

void validate_pairs(std::span<const TwinPair> pairs) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!std::isfinite(pairs[i].phenotype_1) || !std::isfinite(pairs[i].phenotype_2)) {
      throw ValidationError("twin fit: non-finite phenotype in pair " + std::to_string(i));
    }
  }
}

}  // namespace

AceFit fit_variance_model(std::span<const TwinPair> pairs, VarianceModel model, const FitOptions& options) {
  validate_pairs(pairs);
  const Data d = summarize(pairs);
  check_counts(d, model);
  NestedFits fits = fit_chain(d, options.max_iterations, model);
  switch (model) {
    case VarianceModel::kE: return fits.e;
    case VarianceModel::kACE: return fits.ace;
    case VarianceModel::kAE: break;
  }
  bootstrap_h2(pairs, fits.ae, options);
  return fits.ae;
}

NestedFits fit_nested(std::span<const TwinPair> pairs, const FitOptions& options) {
  validate_pairs(pairs);
  const Data d = summarize(pairs);
  check_counts(d, VarianceModel::kACE);
  NestedFits fits = fit_chain(d, options.max_iterations, VarianceModel::kACE);
  bootstrap_h2(pairs, fits.ae, options);
  return fits;
}

AceFit select_model_aic(const NestedFits& fits) {
  AceFit best = fits.ace;
  if (fits.ae.aic <= best.aic) best = fits.ae;
  if (fits.e.aic <= best.aic) best = fits.e;
  return best;
}

AceFit select_model_aic(std::span<const TwinPair> pairs, const FitOptions& options) {
  return select_model_aic(fit_nested(pairs, options));
}

Heritability heritability(const AceFit& fit) {
  if (fit.model != VarianceModel::kAE) {
    throw ValidationError(std::string("heritability is defined for AE fits; this fit is ") + to_string(fit.model) +
                          ", use the AE fit or the selected model's report");
  }
  return {fit.a2 / (fit.a2 + fit.e2), fit.h2_se};
}

}  // namespace brainage::stats
