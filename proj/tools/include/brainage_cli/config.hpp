#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "brainage/cohort.hpp"
#include "brainage/network.hpp"
#include "brainage/training.hpp"

namespace brainage::cli {

enum class InputKind { kGm, kWm, kGmWm, kRaw };
enum class Method { kCnn, kGpr };

InputKind parse_input_kind(const std::string& text);
const char* to_string(InputKind kind);
Method parse_method(const std::string& text);

/// Everything `train` needs. Defaults: raw input, CNN, 0.8 / 0.1 / 0.1 split.
struct RunConfig {
  model::TrainConfig train;
  std::size_t base_feature_maps = 8;
  std::size_t num_blocks = 5;
  bool zscore_input = false;
  InputKind input_kind = InputKind::kRaw;
  Method method = Method::kCnn;
  cohort::SplitRequest split{std::nullopt, std::array<double, 3>{0.8, 0.1, 0.1}};
  std::filesystem::path out;
  std::uint64_t seed = 0;

  void set_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
  }
  void validate() const;
};

/// Applies a JSON object of config keys (unknown keys are rejected).
void apply_config_json(RunConfig& config, const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace brainage::cli
