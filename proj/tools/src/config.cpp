#include "brainage_cli/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "brainage/error.hpp"

namespace brainage::cli {

InputKind parse_input_kind(const std::string& text) {
  if (text == "gm") return InputKind::kGm;
  if (text == "wm") return InputKind::kWm;
  if (text == "gm+wm") return InputKind::kGmWm;
  if (text == "raw") return InputKind::kRaw;
  throw ValidationError("input kind must be gm, wm, gm+wm or raw (got '" + text + "')");
}

const char* to_string(InputKind kind) {
  switch (kind) {
    case InputKind::kGm: return "gm";
    case InputKind::kWm: return "wm";
    case InputKind::kGmWm: return "gm+wm";
    case InputKind::kRaw: return "raw";
  }
  return "unknown";
}

Method parse_method(const std::string& text) {
  if (text == "cnn") return Method::kCnn;
  if (text == "gpr") return Method::kGpr;
  throw ValidationError("method must be cnn or gpr (got '" + text + "')");
}

void RunConfig::validate() const {
  train.validate();
  if (base_feature_maps == 0) throw ValidationError("config: base_feature_maps must be positive");
  if (num_blocks == 0) throw ValidationError("config: num_blocks must be positive");
}

void apply_config_json(RunConfig& c, const std::string& json_text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    try {
      if (key == "learning_rate") c.train.learning_rate = v.get<double>();
      else if (key == "lr_decay_per_epoch") c.train.lr_decay_per_epoch = v.get<double>();
      else if (key == "momentum") c.train.momentum = v.get<double>();
      else if (key == "weight_decay") c.train.weight_decay = v.get<double>();
      else if (key == "epochs") c.train.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.train.batch_size = v.get<std::size_t>();
      else if (key == "augment") c.train.augment = v.get<bool>();
      else if (key == "max_shift_voxels") c.train.max_shift_voxels = v.get<int>();
      else if (key == "max_rotation_degrees") c.train.max_rotation_degrees = v.get<double>();
      else if (key == "restarts") c.train.restarts = v.get<std::size_t>();
      else if (key == "augment_interpolation") {
        const auto s = v.get<std::string>();
        if (s == "trilinear") c.train.augment_interpolation = Interpolation::kTrilinear;
        else if (s == "cubic") c.train.augment_interpolation = Interpolation::kCubicSpline;
        else throw ValidationError("config key augment_interpolation must be trilinear or cubic");
      }
      else if (key == "seed") c.set_seed(v.get<std::uint64_t>());
      else if (key == "base_feature_maps") c.base_feature_maps = v.get<std::size_t>();
      else if (key == "num_blocks") c.num_blocks = v.get<std::size_t>();
      else if (key == "zscore_input") c.zscore_input = v.get<bool>();
      else if (key == "input_kind") c.input_kind = parse_input_kind(v.get<std::string>());
      else if (key == "method") c.method = parse_method(v.get<std::string>());
      else if (key == "split_counts") {
        c.split = {v.get<std::array<std::size_t, 3>>(), std::nullopt};
      } else if (key == "split_fractions") {
        c.split = {std::nullopt, v.get<std::array<double, 3>>()};
      } else if (key == "out") c.out = v.get<std::string>();
      else throw ValidationError("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw ValidationError("config key '" + key + "' has the wrong type: " + e.what());
    }
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  apply_config_json(c, ss.str());
  return c;
}

}  // namespace brainage::cli
