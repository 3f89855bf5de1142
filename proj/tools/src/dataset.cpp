#include "brainage_cli/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <nlohmann/json.hpp>

#include "brainage/error.hpp"
#include "brainage/nifti.hpp"

namespace brainage::cli {

namespace fs = std::filesystem;

fs::path tissue_path(const fs::path& raw, const char* tissue) {
  fs::path out = raw;
  out.replace_filename(raw.stem().string() + "_" + tissue + raw.extension().string());
  return out;
}

std::vector<fs::path> input_paths(const cohort::ManifestRow& row, InputKind kind, const fs::path& manifest_dir) {
  fs::path raw = row.volume_path;
  if (raw.is_relative()) raw = manifest_dir / raw;
  switch (kind) {
    case InputKind::kRaw: return {raw};
    case InputKind::kGm: return {tissue_path(raw, "gm")};
    case InputKind::kWm: return {tissue_path(raw, "wm")};
    case InputKind::kGmWm: return {tissue_path(raw, "gm"), tissue_path(raw, "wm")};
  }
  return {};
}

model::Subject load_subject(const cohort::ManifestRow& row, InputKind kind, const fs::path& manifest_dir) {
  model::Subject s;
  s.id = row.subject_id;
  s.age = row.age_years;
  for (const auto& p : input_paths(row, kind, manifest_dir)) s.volumes.push_back(read_nifti(p));
  return s;
}

std::vector<const cohort::ManifestRow*> first_sessions(const cohort::Manifest& manifest) {
  std::map<std::string, const cohort::ManifestRow*> best;
  for (const auto& r : manifest.rows) {
    auto [it, fresh] = best.try_emplace(r.subject_id, &r);
    if (!fresh && r.session < it->second->session) it->second = &r;
  }
  std::vector<const cohort::ManifestRow*> out;
  for (const auto& r : manifest.rows) {
    if (best.at(r.subject_id) == &r) out.push_back(&r);
  }
  return out;
}

gpr::FeatureMatrix feature_matrix(std::span<const model::Subject> subjects) {
  if (subjects.empty()) throw ValidationError("no subjects to build features from");
  std::size_t width = 0;
  for (const auto& v : subjects[0].volumes) width += v.size();
  gpr::FeatureMatrix x(static_cast<Eigen::Index>(subjects.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    std::size_t col = 0;
    for (const auto& v : subjects[i].volumes) {
      if (col + v.size() > width) throw ShapeError("subject " + subjects[i].id + " has more voxels than the first subject");
      for (float f : v.data()) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col++)) = f;
    }
    if (col != width) throw ShapeError("subject " + subjects[i].id + " has fewer voxels than the first subject");
  }
  return x;
}

std::vector<double> LinearGprModel::predict(std::span<const model::Subject> subjects) const {
  std::vector<double> out;
  out.reserve(subjects.size());
  for (const auto& s : subjects) {
    if (s.volumes.size() != volumes_per_subject) {
      throw ShapeError("subject " + s.id + " has " + std::to_string(s.volumes.size()) + " volumes, model expects " +
                       std::to_string(volumes_per_subject));
    }
    double acc = 0.0;
    Eigen::Index k = 0;
    for (const auto& v : s.volumes) {
      if (v.dims() != dims) throw ShapeError("subject " + s.id + " volume dims do not match the model");
      for (float f : v.data()) acc += weights[k++] * f;
    }
    out.push_back(acc + target_mean);
  }
  return out;
}

LinearGprModel to_linear_model(const gpr::GprModel& model, const gpr::FeatureMatrix& x_train, InputKind kind,
                               const Extent3& dims, std::size_t volumes_per_subject) {
  LinearGprModel m;
  m.input_kind = kind;
  m.dims = dims;
  m.volumes_per_subject = volumes_per_subject;
  m.hyper = model.hyper;
  m.target_mean = model.target_mean;
  m.log_marginal_likelihood = model.log_marginal_likelihood;
  m.weights = (model.hyper.s / static_cast<double>(x_train.cols())) * (x_train.transpose() * model.alpha);
  return m;
}

namespace {

constexpr char kGprMagic[4] = {'B', 'A', 'G', 'P'};
constexpr std::uint32_t kGprVersion = 1;

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::string& in, std::size_t& pos) {
  if (in.size() - pos < sizeof(U)) throw FormatError("unexpected end of GPR model");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(U);
  return v;
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

void save_gpr_model(const LinearGprModel& m, const fs::path& path) {
  const nlohmann::json meta = {
      {"input_kind", to_string(m.input_kind)}, {"dims", m.dims},
      {"volumes_per_subject", m.volumes_per_subject}, {"s", m.hyper.s},
      {"sigma2", m.hyper.sigma2}, {"target_mean", m.target_mean},
      {"log_marginal_likelihood", m.log_marginal_likelihood}, {"feature_count", m.weights.size()},
  };
  const std::string text = meta.dump();
  std::string bytes(kGprMagic, 4);
  put_le<std::uint32_t>(bytes, kGprVersion);
  put_le<std::uint64_t>(bytes, text.size());
  bytes += text;
  for (Eigen::Index i = 0; i < m.weights.size(); ++i) put_le<std::uint64_t>(bytes, std::bit_cast<std::uint64_t>(m.weights[i]));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

LinearGprModel load_gpr_model(const fs::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kGprMagic, 4) != 0) throw FormatError(path.string() + " is not a GPR model");
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kGprVersion) throw FormatError("unsupported GPR model version " + std::to_string(version));
  const auto length = get_le<std::uint64_t>(bytes, pos);
  if (bytes.size() - pos < length) throw FormatError("unexpected end of GPR model");
  LinearGprModel m;
  std::size_t features = 0;
  try {
    const auto meta = nlohmann::json::parse(bytes.substr(pos, length));
    m.input_kind = parse_input_kind(meta.at("input_kind").get<std::string>());
    m.dims = meta.at("dims").get<Extent3>();
    m.volumes_per_subject = meta.at("volumes_per_subject").get<std::size_t>();
    m.hyper = {meta.at("s").get<double>(), meta.at("sigma2").get<double>()};
    m.target_mean = meta.at("target_mean").get<double>();
    m.log_marginal_likelihood = meta.at("log_marginal_likelihood").get<double>();
    features = meta.at("feature_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed GPR model metadata: ") + e.what());
  }
  pos += length;
  if (features != voxel_count(m.dims) * m.volumes_per_subject) throw ShapeError("GPR model weight count does not match its dims");
  m.weights.resize(static_cast<Eigen::Index>(features));
  for (std::size_t i = 0; i < features; ++i) m.weights[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
  if (pos != bytes.size()) throw FormatError("trailing bytes after GPR model");
  return m;
}

bool is_cnn_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::memcmp(magic, "BAGE", 4) == 0;
}

}  // namespace brainage::cli
