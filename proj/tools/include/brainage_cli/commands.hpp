#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "brainage_cli/config.hpp"

namespace brainage::cli {

struct TrainOptions {
  std::filesystem::path manifest;
  RunConfig config;
};
/// Writes model.ckpt (CNN) or model.gpr, history.csv, split.csv,
/// predictions_test.csv and metrics_test.csv into config.out.
void cmd_train(const TrainOptions& options, std::ostream& log);

struct PredictOptions {
  std::filesystem::path model;
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::optional<InputKind> input_kind;
};
void cmd_predict(const PredictOptions& options, std::ostream& log);

struct EvaluateOptions {
  std::filesystem::path predictions;
  std::optional<std::filesystem::path> out;
};
void cmd_evaluate(const EvaluateOptions& options, std::ostream& out);

struct HeritabilityOptions {
  std::filesystem::path predictions;
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> out;
  std::uint64_t seed = 0;
  std::size_t bootstrap = 1000;
};
void cmd_heritability(const HeritabilityOptions& options, std::ostream& out);

enum class Pairing { kWithin, kBetween };

struct ReliabilityOptions {
  std::filesystem::path predictions;
  std::optional<std::filesystem::path> predictions_b;
  std::optional<std::filesystem::path> manifest;
  Pairing pairing = Pairing::kWithin;
  std::optional<std::filesystem::path> out;
};
void cmd_reliability(const ReliabilityOptions& options, std::ostream& out);

struct PhantomOptions {
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t n = 100;
  std::size_t dims = 32;
  double age_min = 18.0;
  double age_max = 90.0;
  bool tissues = false;
  bool twins = false;
  std::size_t n_mz = 100;
  std::size_t n_dz = 100;
  double a2 = 0.6;
  double c2 = 0.2;
  double e2 = 0.2;
  double offset_sd = 5.0;
  /// Extra noise-only sessions at the home site.
  std::size_t rescans = 0;
  /// One extra session at site B through a scanner effect.
  bool second_scanner = false;
  double gain = 1.1;
  double bias_amplitude = 0.1;
  double extra_noise = 0.02;
};
void cmd_phantom(const PhantomOptions& options, std::ostream& log);

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out;
};
/// Returns false when any layer fails.
bool cmd_gradcheck(const GradcheckOptions& options, std::ostream& out);

}  // namespace brainage::cli
