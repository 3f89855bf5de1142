#pragma once

#include <cstdint>
#include <optional>
#include <span>

namespace brainage::stats {

enum class Zygosity { kMZ, kDZ };
enum class VarianceModel { kACE, kAE, kE };

const char* to_string(Zygosity z);
const char* to_string(VarianceModel m);

struct TwinPair {
  double phenotype_1 = 0.0;
  double phenotype_2 = 0.0;
  Zygosity zygosity = Zygosity::kMZ;
};

struct AceFit {
  VarianceModel model = VarianceModel::kACE;
  double a2 = 0.0;
  double c2 = 0.0;
  double e2 = 0.0;
  double mean = 0.0;
  double log_likelihood = 0.0;
  /// 2k - 2 lnL with k = 1 (mean) + retained components.
  double aic = 0.0;
  /// a2 / (a2 + e2) for AE fits, 0 for E fits, absent for ACE.
  std::optional<double> h2;
  /// Bootstrap standard error of h2 (AE fits with resamples > 0).
  std::optional<double> h2_se;
  /// e2 fell below 1e-8: the fit sits on the parameter boundary.
  bool boundary = false;
  std::size_t n_mz = 0;
  std::size_t n_dz = 0;
};

struct FitOptions {
  /// Nonparametric bootstrap over pairs (within zygosity) for the h2 SE.
  std::size_t bootstrap_resamples = 1000;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 20000;
};

/// Maximum likelihood fit of the bivariate normal twin model with a shared
/// mean. Sub-models are fitted along the chain E -> AE -> ACE, each warm
/// started from the previous optimum, so lnL(ACE) >= lnL(AE) >= lnL(E).
AceFit fit_variance_model(std::span<const TwinPair> pairs, VarianceModel model, const FitOptions& options = {});

struct NestedFits {
  AceFit ace;
  AceFit ae;
  AceFit e;
};

/// All three fits from one warm-started chain.
NestedFits fit_nested(std::span<const TwinPair> pairs, const FitOptions& options = {});

/// Starts from ACE, drops C if AIC(AE) <= AIC(ACE), then drops A if
/// AIC(E) <= AIC of the survivor.
AceFit select_model_aic(const NestedFits& fits);
AceFit select_model_aic(std::span<const TwinPair> pairs, const FitOptions& options = {});

struct Heritability {
  double h2 = 0.0;
  std::optional<double> se;
};

/// h2 = a2 / (a2 + e2). ValidationError for non-AE fits.
Heritability heritability(const AceFit& fit);

}  // namespace brainage::stats
