#include "brainage/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "brainage/error.hpp"

namespace brainage::model {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'B', 'A', 'G', 'E'};
constexpr const char* kTruncated = "unexpected end of checkpoint";

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError(kTruncated);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U le() {
    auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(s[i]) << (8 * i);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

json architecture_json(const ArchitectureSpec& s) {
  return {{"input_dims", s.input_dims},         {"input_channels", s.input_channels},
          {"base_feature_maps", s.base_feature_maps}, {"num_blocks", s.num_blocks},
          {"branches", s.branches},             {"zscore_input", s.zscore_input}};
}

ArchitectureSpec architecture_from(const json& j) {
  ArchitectureSpec s;
  s.input_dims = j.at("input_dims").get<Extent3>();
  s.input_channels = j.at("input_channels").get<std::size_t>();
  s.base_feature_maps = j.at("base_feature_maps").get<std::size_t>();
  s.num_blocks = j.at("num_blocks").get<std::size_t>();
  s.branches = j.at("branches").get<std::size_t>();
  s.zscore_input = j.at("zscore_input").get<bool>();
  return s;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
  Network<float> model = checkpoint.model;
  const auto state = model.state();

  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const auto& p : state) {
    manifest.push_back({{"name", p.name}, {"shape", p.tensor->shape()}, {"offset", offset}});
    offset += p.tensor->size() * sizeof(float);
  }
  const auto& m = checkpoint.metadata;
  const json meta = {
      {"architecture", architecture_json(model.spec())},
      {"training",
       {{"best_epoch", m.best_epoch},
        {"best_val_mae", m.best_val_mae},
        {"seed", m.seed},
        {"restart", m.restart},
        {"epochs_run", m.epochs_run}}},
      {"parameters", manifest},
  };
  const std::string text = meta.dump();

  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + offset);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : state) {
    for (float v : p.tensor->values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (bytes.size() < 4) throw FormatError(kTruncated);
  auto magic = in.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic");
  const auto version = in.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto length = in.le<std::uint64_t>();
  if (length > in.remaining()) throw FormatError(kTruncated);
  auto text = in.take(static_cast<std::size_t>(length));

  json meta;
  ArchitectureSpec spec;
  TrainMetadata md;
  json manifest;
  try {
    meta = json::parse(text.begin(), text.end());
    spec = architecture_from(meta.at("architecture"));
    const json& t = meta.at("training");
    md.best_epoch = t.at("best_epoch").get<long long>();
    md.best_val_mae = t.at("best_val_mae").get<double>();
    md.seed = t.at("seed").get<std::uint64_t>();
    md.restart = t.at("restart").get<std::size_t>();
    md.epochs_run = t.at("epochs_run").get<std::size_t>();
    manifest = meta.at("parameters");
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  spec.validate();

  Network<float> model(spec);
  auto state = model.state();
  if (manifest.size() != state.size()) {
    throw ShapeError("checkpoint lists " + std::to_string(manifest.size()) + " tensors, architecture has " +
                     std::to_string(state.size()));
  }
  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& entry = manifest[i];
    std::string name;
    nn::Shape shape;
    std::uint64_t offset = 0;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<nn::Shape>();
      offset = entry.at("offset").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed checkpoint manifest: ") + e.what());
    }
    if (name != state[i].name || shape != state[i].tensor->shape()) {
      throw ShapeError("checkpoint tensor " + name + " " + nn::to_string(shape) + " does not match architecture tensor " +
                       state[i].name + " " + nn::to_string(state[i].tensor->shape()));
    }
    if (offset != expected_offset) throw FormatError("checkpoint tensor " + name + " has inconsistent byte offset");
    expected_offset += state[i].tensor->size() * sizeof(float);
  }
  for (auto& p : state) {
    for (float& v : p.tensor->values()) v = std::bit_cast<float>(in.le<std::uint32_t>());
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after checkpoint data");
  return {std::move(model), md};
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return deserialize_checkpoint(bytes);
}

}  // namespace brainage::model
