#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "brainage/random.hpp"
#include "brainage/twin.hpp"
#include "brainage/volume.hpp"

namespace brainage::phantom {

/// Nested-ellipsoid "brain": a tissue shell whose intensity fades with age
/// around a spherical zero-intensity "ventricle" that grows with age.
/// Lengths are in voxels, rates per year, ages measured from 18.
struct PhantomParams {
  Extent3 dims{32, 32, 32};
  std::array<double, 3> brain_radii{12.0, 13.0, 11.0};
  double ventricle_base_radius = 2.0;
  double ventricle_growth_per_year = 0.07;
  double cortex_intensity_base = 0.8;
  double cortex_fade_per_year = 0.004;
  double noise_sd = 0.02;
  std::uint64_t seed = 0;

  /// Throws ValidationError unless the ventricle stays strictly inside the
  /// brain ellipsoid for every age in [18, 90] and the shell fits the grid.
  void validate() const;
  double ventricle_radius(double age) const;
  double tissue_intensity(double age) const;
};

/// Raw T1-like phantom plus GM-like (outer shell) and WM-like (inner tissue)
/// maps generated from the same geometry.
struct PhantomVolumes {
  Volume3D raw;
  Volume3D gm;
  Volume3D wm;
};

Volume3D generate_phantom(double age, const PhantomParams& params, Rng& rng);
PhantomVolumes generate_phantom_tissues(double age, const PhantomParams& params, Rng& rng);

using stats::Zygosity;

struct PhantomSubject {
  std::string id;
  double age = 0.0;            // chronological age recorded in the manifest
  double generated_age = 0.0;  // age the phantom was rendered at (age + offset)
  PhantomVolumes volumes;
  std::optional<std::string> pair_id;
  std::optional<Zygosity> zygosity;
};

struct CohortOptions {
  double age_min = 18.0;
  double age_max = 90.0;
  bool tissues = false;  // also render GM / WM maps
  std::string id_prefix = "sub";
};

/// n subjects with ages uniform in [age_min, age_max]. Subject i is rendered
/// from a generator seeded by (params.seed, i).
std::vector<PhantomSubject> generate_cohort(std::size_t n, const PhantomParams& params,
                                            const CohortOptions& options = {});

/// Re-renders a subject at its generated age with fresh noise drawn from
/// noise_seed (a noise-only rescan).
PhantomVolumes rescan(const PhantomSubject& subject, const PhantomParams& params, std::uint64_t noise_seed,
                      bool tissues = false);

struct TwinSimParams {
  std::size_t n_mz = 100;
  std::size_t n_dz = 100;
  double a2 = 0.6;
  double c2 = 0.2;
  double e2 = 0.2;
  double age_min = 18.0;
  double age_max = 90.0;
  /// Standard deviation (years) of the latent brain-age offset.
  double offset_sd = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TwinPairRecord {
  std::string pair_id;
  Zygosity zygosity = Zygosity::kMZ;
  double age = 0.0;
  double offset_1 = 0.0;
  double offset_2 = 0.0;
};

struct TwinCohort {
  std::vector<TwinPairRecord> pairs;
  /// Two subjects per pair (empty when volumes were not requested).
  std::vector<PhantomSubject> subjects;
};

/// Latent offset per twin: offset_sd * (sqrt(a2) A + sqrt(c2) C + sqrt(e2) E)
/// with A shared fully by MZ pairs and with correlation 1/2 by DZ pairs, C
/// shared, E unique. Phantoms (when render_volumes) are drawn at age + offset.
TwinCohort generate_twin_cohort(const TwinSimParams& params, const PhantomParams& phantom_params,
                                bool render_volumes, bool tissues = false);

struct ScannerEffect {
  double gain = 1.0;
  double bias_field_amplitude = 0.0;
  double extra_noise_sd = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// gain * (1 + amplitude * p(x)) * v + noise, clipped to [0, 1], where p is a
/// first-order polynomial in normalized coordinates, zero-mean over the grid,
/// with a seeded random direction.
Volume3D apply_scanner_effect(const Volume3D& volume, const ScannerEffect& effect);

}  // namespace brainage::phantom
