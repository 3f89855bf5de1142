#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "brainage/metrics.hpp"
#include "brainage/twin.hpp"

namespace brainage::cohort {

inline constexpr const char* kManifestHeader = "subject_id,volume_path,age_years,sex,site,session,pair_id,zygosity";
inline constexpr const char* kPredictionsHeader = "subject_id,session,age_years,predicted_age_years,brain_pad_years";

enum class Sex { kMale, kFemale, kUnknown };

struct ManifestRow {
  std::string subject_id;
  std::string volume_path;
  double age_years = 0.0;
  Sex sex = Sex::kUnknown;
  std::string site;
  int session = 1;
  std::optional<std::string> pair_id;
  std::optional<stats::Zygosity> zygosity;
};

struct Manifest {
  std::vector<ManifestRow> rows;
};

/// Parses and validates the whole document before returning; the first
/// problem aborts with a ValidationError naming the line and column.
Manifest parse_manifest(std::istream& in);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, std::ostream& out);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Either explicit subject counts or fractions for train / validation / test.
struct SplitRequest {
  std::optional<std::array<std::size_t, 3>> counts;
  std::optional<std::array<double, 3>> fractions;
};

/// Floor of each fraction times n; the split with the largest fraction
/// takes the remainder.
std::array<std::size_t, 3> counts_from_fractions(std::size_t n, const std::array<double, 3>& fractions);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Random split of distinct subjects, deterministic for a seed. Twins
/// sharing a pair_id always land in the same split. ValidationError when
/// the counts are infeasible.
Split split_cohort(const Manifest& manifest, const SplitRequest& request, std::uint64_t seed);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double value);

void write_predictions(std::span<const stats::PredictionRecord> records, std::ostream& out);
void write_predictions(std::span<const stats::PredictionRecord> records, const std::filesystem::path& path);
std::vector<stats::PredictionRecord> parse_predictions(std::istream& in);
std::vector<stats::PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace brainage::cohort
