#include "brainage/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "brainage/error.hpp"

namespace brainage::phantom {

namespace {

constexpr double kMinAge = 18.0;
constexpr double kMaxAge = 90.0;
// Normalized ellipsoid radius where the GM-like shell begins.
constexpr double kShellStart = 0.7;

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

std::string numbered(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05zu", i);
  return prefix + "-" + buf;
}

}  // namespace

double PhantomParams::ventricle_radius(double age) const {
  return std::max(0.0, ventricle_base_radius + ventricle_growth_per_year * (age - kMinAge));
}

double PhantomParams::tissue_intensity(double age) const {
  return clamp01(cortex_intensity_base - cortex_fade_per_year * (age - kMinAge));
}

void PhantomParams::validate() const {
  for (std::size_t a = 0; a < 3; ++a) {
    if (dims[a] == 0) throw ValidationError("phantom dims must be positive");
    if (!(brain_radii[a] > 0.0)) throw ValidationError("phantom brain radii must be positive");
  }
  if (!(ventricle_base_radius >= 0.0)) throw ValidationError("phantom ventricle_base_radius must be >= 0");
  if (!(ventricle_growth_per_year >= 0.0)) throw ValidationError("phantom ventricle_growth_per_year must be >= 0");
  if (!(cortex_fade_per_year >= 0.0)) throw ValidationError("phantom cortex_fade_per_year must be >= 0");
  if (!(noise_sd >= 0.0)) throw ValidationError("phantom noise_sd must be >= 0");
  const double min_radius = *std::min_element(brain_radii.begin(), brain_radii.end());
  if (!(ventricle_radius(kMaxAge) < min_radius)) {
    throw ValidationError("phantom ventricle (radius " + std::to_string(ventricle_radius(kMaxAge)) +
                          " at age 90) is not strictly inside the brain ellipsoid (min radius " +
                          std::to_string(min_radius) + ")");
  }
}

PhantomVolumes generate_phantom_tissues(double age, const PhantomParams& params, Rng& rng) {
  params.validate();
  if (!(age >= 0.0 && age <= 120.0)) throw ValidationError("phantom age must lie in [0, 120]");
  const double rv = params.ventricle_radius(age);
  const double min_radius = *std::min_element(params.brain_radii.begin(), params.brain_radii.end());
  if (!(rv < min_radius)) {
    throw ValidationError("phantom ventricle leaves the brain ellipsoid at age " + std::to_string(age));
  }
  const double intensity = params.tissue_intensity(age);
  const double shell_scale = params.cortex_intensity_base > 0.0 ? intensity / params.cortex_intensity_base : 0.0;
  const double mean_radius = (params.brain_radii[0] + params.brain_radii[1] + params.brain_radii[2]) / 3.0;

  const Extent3& d = params.dims;
  const double c[3] = {(d[0] - 1) / 2.0, (d[1] - 1) / 2.0, (d[2] - 1) / 2.0};
  std::vector<float> raw(voxel_count(d)), gm(raw.size()), wm(raw.size());
  std::normal_distribution<double> noise(0.0, 1.0);
  const bool noisy = params.noise_sd > 0.0;

  std::size_t i = 0;
  for (std::size_t z = 0; z < d[0]; ++z) {
    for (std::size_t h = 0; h < d[1]; ++h) {
      for (std::size_t w = 0; w < d[2]; ++w, ++i) {
        const double p[3] = {z - c[0], h - c[1], w - c[2]};
        double rho2 = 0.0, r2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          rho2 += (p[a] / params.brain_radii[a]) * (p[a] / params.brain_radii[a]);
          r2 += p[a] * p[a];
        }
        const double rho = std::sqrt(rho2);
        // Soft (one-voxel) boundaries give partial-volume edges.
        const double brain = clamp01((1.0 - rho) * mean_radius + 0.5);
        const double ventricle = clamp01(rv - std::sqrt(r2) + 0.5);
        const double shell = clamp01((rho - kShellStart) * mean_radius + 0.5);
        const double tissue = brain * (1.0 - ventricle);
        double vr = intensity * tissue;
        double vg = shell_scale * brain * shell;
        double vw = brain * (1.0 - shell) * (1.0 - ventricle);
        if (noisy) {
          vr += params.noise_sd * noise(rng);
          vg += params.noise_sd * noise(rng);
          vw += params.noise_sd * noise(rng);
        }
        raw[i] = static_cast<float>(clamp01(vr));
        gm[i] = static_cast<float>(clamp01(vg));
        wm[i] = static_cast<float>(clamp01(vw));
      }
    }
  }
  return {Volume3D(d, {1, 1, 1}, std::move(raw)), Volume3D(d, {1, 1, 1}, std::move(gm)),
          Volume3D(d, {1, 1, 1}, std::move(wm))};
}

Volume3D generate_phantom(double age, const PhantomParams& params, Rng& rng) {
  return generate_phantom_tissues(age, params, rng).raw;
}

std::vector<PhantomSubject> generate_cohort(std::size_t n, const PhantomParams& params,
                                            const CohortOptions& options) {
  params.validate();
  if (n == 0) throw ValidationError("cohort size must be positive");
  if (!(options.age_min <= options.age_max)) throw ValidationError("cohort age range is empty");
  Rng age_rng(derive_seed(params.seed, 0xA6E5));
  std::uniform_real_distribution<double> age_dist(options.age_min, options.age_max);
  std::vector<PhantomSubject> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = numbered(options.id_prefix, i + 1);
    out[i].age = age_dist(age_rng);
    out[i].generated_age = out[i].age;
  }
  // Rendering is independent per subject.
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(params.seed, i));
    out[i].volumes = generate_phantom_tissues(out[i].age, params, rng);
    if (!options.tissues) {
      out[i].volumes.gm = Volume3D{};
      out[i].volumes.wm = Volume3D{};
    }
  }
  return out;
}

PhantomVolumes rescan(const PhantomSubject& subject, const PhantomParams& params, std::uint64_t noise_seed,
                      bool tissues) {
  Rng rng(noise_seed);
  PhantomVolumes v = generate_phantom_tissues(subject.generated_age, params, rng);
  if (!tissues) {
    v.gm = Volume3D{};
    v.wm = Volume3D{};
  }
  return v;
}

void TwinSimParams::validate() const {
  if (!(a2 >= 0.0 && c2 >= 0.0 && e2 >= 0.0)) throw ValidationError("twin variance components must be >= 0");
  if (std::abs(a2 + c2 + e2 - 1.0) > 1e-12) {
    throw ValidationError("twin variance components must sum to 1 (got " + std::to_string(a2 + c2 + e2) + ")");
  }
  if (n_mz + n_dz == 0) throw ValidationError("twin cohort needs at least one pair");
  if (!(age_min <= age_max)) throw ValidationError("twin age range is empty");
  if (!(offset_sd >= 0.0)) throw ValidationError("twin offset_sd must be >= 0");
}

TwinCohort generate_twin_cohort(const TwinSimParams& params, const PhantomParams& phantom_params,
                                bool render_volumes, bool tissues) {
  params.validate();
  if (render_volumes) phantom_params.validate();
  Rng rng(derive_seed(params.seed, 0x7714));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> age_dist(params.age_min, params.age_max);
  const double sa = std::sqrt(params.a2), sc = std::sqrt(params.c2), se = std::sqrt(params.e2);
  const double half = std::sqrt(0.5);

  TwinCohort cohort;
  const std::size_t total = params.n_mz + params.n_dz;
  cohort.pairs.reserve(total);
  for (std::size_t p = 0; p < total; ++p) {
    TwinPairRecord rec;
    rec.zygosity = p < params.n_mz ? Zygosity::kMZ : Zygosity::kDZ;
    rec.pair_id = numbered(rec.zygosity == Zygosity::kMZ ? "mz" : "dz", p + 1);
    rec.age = age_dist(rng);
    const double g0 = normal(rng), g1 = normal(rng), g2 = normal(rng);
    const double common = normal(rng);
    const double e1 = normal(rng), e2 = normal(rng);
    double a1, a2;
    if (rec.zygosity == Zygosity::kMZ) {
      a1 = a2 = g0;
    } else {
      a1 = half * g0 + half * g1;
      a2 = half * g0 + half * g2;
    }
    rec.offset_1 = params.offset_sd * (sa * a1 + sc * common + se * e1);
    rec.offset_2 = params.offset_sd * (sa * a2 + sc * common + se * e2);
    cohort.pairs.push_back(rec);
  }

  if (render_volumes) {
    cohort.subjects.reserve(2 * total);
    for (std::size_t p = 0; p < total; ++p) {
      const auto& rec = cohort.pairs[p];
      for (int twin = 0; twin < 2; ++twin) {
        PhantomSubject s;
        s.id = rec.pair_id + (twin == 0 ? "a" : "b");
        s.age = rec.age;
        s.generated_age = std::clamp(rec.age + (twin == 0 ? rec.offset_1 : rec.offset_2), 0.0, 120.0);
        s.pair_id = rec.pair_id;
        s.zygosity = rec.zygosity;
        Rng vr(derive_seed(phantom_params.seed ^ params.seed, 2 * p + static_cast<std::size_t>(twin)));
        s.volumes = generate_phantom_tissues(s.generated_age, phantom_params, vr);
        if (!tissues) {
          s.volumes.gm = Volume3D{};
          s.volumes.wm = Volume3D{};
        }
        cohort.subjects.push_back(std::move(s));
      }
    }
  }
  return cohort;
}

void ScannerEffect::validate() const {
  if (!(gain > 0.0)) throw ValidationError("scanner gain must be > 0");
  if (!(bias_field_amplitude >= 0.0)) throw ValidationError("scanner bias_field_amplitude must be >= 0");
  if (!(extra_noise_sd >= 0.0)) throw ValidationError("scanner extra_noise_sd must be >= 0");
}

Volume3D apply_scanner_effect(const Volume3D& volume, const ScannerEffect& effect) {
  effect.validate();
  volume.validate();
  if (effect.gain == 1.0 && effect.bias_field_amplitude == 0.0 && effect.extra_noise_sd == 0.0) return volume;

  Rng rng(effect.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double dir[3] = {normal(rng), normal(rng), normal(rng)};
  const double norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
  for (double& x : dir) x = norm > 0.0 ? x / norm : 0.0;

  const Extent3& d = volume.dims();
  // Normalized coordinates in [-1, 1], symmetric about the grid center, so
  // the linear field has zero mean over the volume.
  auto coord = [](std::size_t i, std::size_t n) { return n > 1 ? 2.0 * i / (n - 1.0) - 1.0 : 0.0; };

  Volume3D out = volume;
  auto data = out.data();
  std::size_t i = 0;
  for (std::size_t z = 0; z < d[0]; ++z) {
    for (std::size_t h = 0; h < d[1]; ++h) {
      for (std::size_t w = 0; w < d[2]; ++w, ++i) {
        const double field =
            1.0 + effect.bias_field_amplitude * (dir[0] * coord(z, d[0]) + dir[1] * coord(h, d[1]) + dir[2] * coord(w, d[2]));
        double v = effect.gain * field * data[i];
        if (effect.extra_noise_sd > 0.0) v += effect.extra_noise_sd * normal(rng);
        data[i] = static_cast<float>(clamp01(v));
      }
    }
  }
  return out;
}

}  // namespace brainage::phantom
