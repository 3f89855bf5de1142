#include "brainage/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "brainage/error.hpp"
#include "brainage/random.hpp"

namespace brainage::cohort {

namespace {

constexpr std::array<const char*, 8> kManifestColumns{"subject_id", "volume_path", "age_years", "sex",
                                                      "site",       "session",     "pair_id",   "zygosity"};
constexpr std::array<const char*, 5> kPredictionColumns{"subject_id", "session", "age_years", "predicted_age_years",
                                                        "brain_pad_years"};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void row_error(const char* table, std::size_t line, const char* column, const std::string& what) {
  throw ValidationError(std::string(table) + " row " + std::to_string(line) + ", column " + column + ": " + what);
}

double parse_double(const std::string& s, const char* table, std::size_t line, const char* column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) row_error(table, line, column, "not a number: '" + s + "'");
  if (!std::isfinite(v)) row_error(table, line, column, "non-finite value");
  return v;
}

int parse_int(const std::string& s, const char* table, std::size_t line, const char* column) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) row_error(table, line, column, "not an integer: '" + s + "'");
  return v;
}

// Reads lines, stripping a UTF-8 byte order mark and trailing carriage returns.
std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lines.empty() && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    lines.push_back(line);
  }
  if (in.bad()) throw IoError("failed reading table");
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

void check_header(const std::vector<std::string>& lines, const char* table, const char* header) {
  if (lines.empty()) throw ValidationError(std::string(table) + " is empty");
  if (lines[0] != header) {
    throw ValidationError(std::string(table) + " row 1: header must be exactly '" + header + "'");
  }
}

bool is_na(const std::string& s) { return s == "NA"; }

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

std::string format_number(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

Manifest parse_manifest(std::istream& in) {
  const auto lines = read_lines(in);
  constexpr const char* kTable = "manifest";
  check_header(lines, kTable, kManifestHeader);
  if (lines.size() < 2) throw ValidationError("manifest has no data rows");

  Manifest m;
  std::set<std::pair<std::string, int>> seen;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line = li + 1;
    const auto f = split_fields(lines[li]);
    if (f.size() != kManifestColumns.size()) {
      row_error(kTable, line, f.size() < kManifestColumns.size() ? kManifestColumns[f.size()] : "zygosity",
                "expected 8 fields, found " + std::to_string(f.size()));
    }
    ManifestRow r;
    r.subject_id = f[0];
    if (r.subject_id.empty() || is_na(r.subject_id)) row_error(kTable, line, "subject_id", "missing");
    r.volume_path = f[1];
    if (r.volume_path.empty() || is_na(r.volume_path)) row_error(kTable, line, "volume_path", "missing");
    r.age_years = parse_double(f[2], kTable, line, "age_years");
    if (!(r.age_years > 0.0 && r.age_years < 120.0)) row_error(kTable, line, "age_years", "must lie in (0, 120)");
    if (f[3] == "M") r.sex = Sex::kMale;
    else if (f[3] == "F") r.sex = Sex::kFemale;
    else if (is_na(f[3])) r.sex = Sex::kUnknown;
    else row_error(kTable, line, "sex", "expected M, F or NA, found '" + f[3] + "'");
    r.site = f[4];
    if (r.site.empty()) row_error(kTable, line, "site", "missing (use NA)");
    r.session = parse_int(f[5], kTable, line, "session");
    if (!is_na(f[6])) {
      if (f[6].empty()) row_error(kTable, line, "pair_id", "empty (use NA)");
      r.pair_id = f[6];
    }
    if (f[7] == "MZ") r.zygosity = stats::Zygosity::kMZ;
    else if (f[7] == "DZ") r.zygosity = stats::Zygosity::kDZ;
    else if (!is_na(f[7])) row_error(kTable, line, "zygosity", "expected MZ, DZ or NA, found '" + f[7] + "'");
    if (r.pair_id.has_value() != r.zygosity.has_value()) {
      row_error(kTable, line, r.pair_id ? "zygosity" : "pair_id", "pair_id and zygosity must be given together");
    }
    if (!seen.emplace(r.subject_id, r.session).second) {
      row_error(kTable, line, "subject_id", "duplicate subject_id + session (" + r.subject_id + ", " +
                                               std::to_string(r.session) + ")");
    }
    m.rows.push_back(std::move(r));
  }

  // Each pair has exactly two distinct subjects of one zygosity.
  struct PairInfo {
    std::set<std::string> subjects;
    stats::Zygosity zygosity;
    std::size_t first_line;
  };
  std::map<std::string, PairInfo> pairs;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& r = m.rows[i];
    if (!r.pair_id) continue;
    auto [it, fresh] = pairs.try_emplace(*r.pair_id, PairInfo{{}, *r.zygosity, i + 2});
    if (!fresh && it->second.zygosity != *r.zygosity) {
      row_error(kTable, i + 2, "zygosity", "pair " + *r.pair_id + " has conflicting zygosity");
    }
    it->second.subjects.insert(r.subject_id);
    if (it->second.subjects.size() > 2) row_error(kTable, i + 2, "pair_id", "pair " + *r.pair_id + " has more than two subjects");
  }
  for (const auto& [id, info] : pairs) {
    if (info.subjects.size() != 2) row_error(kTable, info.first_line, "pair_id", "pair " + id + " has only one subject");
  }
  // Per-subject attributes must agree across sessions.
  std::map<std::string, const ManifestRow*> first;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& r = m.rows[i];
    auto [it, fresh] = first.try_emplace(r.subject_id, &r);
    if (!fresh && it->second->pair_id != r.pair_id) {
      row_error(kTable, i + 2, "pair_id", "subject " + r.subject_id + " has different pair_id across sessions");
    }
  }
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_manifest(in);
}

void write_manifest(const Manifest& manifest, std::ostream& out) {
  out << kManifestHeader << '\n';
  for (const auto& r : manifest.rows) {
    const char* sex = r.sex == Sex::kMale ? "M" : r.sex == Sex::kFemale ? "F" : "NA";
    out << r.subject_id << ',' << r.volume_path << ',' << format_number(r.age_years) << ',' << sex << ',' << r.site
        << ',' << r.session << ',' << (r.pair_id ? *r.pair_id : "NA") << ','
        << (r.zygosity ? stats::to_string(*r.zygosity) : "NA") << '\n';
  }
  if (!out) throw IoError("failed writing manifest");
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_manifest(manifest, out);
}

std::array<std::size_t, 3> counts_from_fractions(std::size_t n, const std::array<double, 3>& fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) throw ValidationError("split fractions must lie in (0, 1)");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  std::array<std::size_t, 3> counts{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    // The small slack keeps products such as 0.1 * 600 from flooring to 59.
    counts[i] = static_cast<std::size_t>(std::floor(fractions[i] * static_cast<double>(n) + 1e-9));
    used += counts[i];
  }
  const std::size_t largest =
      static_cast<std::size_t>(std::max_element(fractions.begin(), fractions.end()) - fractions.begin());
  counts[largest] += n - used;
  return counts;
}

Split split_cohort(const Manifest& manifest, const SplitRequest& request, std::uint64_t seed) {
  // Units: a twin pair, or a single subject; all sessions travel together.
  std::vector<std::vector<std::string>> units;
  std::map<std::string, std::size_t> unit_of_pair;
  std::set<std::string> placed;
  for (const auto& r : manifest.rows) {
    if (placed.count(r.subject_id)) continue;
    placed.insert(r.subject_id);
    if (r.pair_id) {
      auto [it, fresh] = unit_of_pair.try_emplace(*r.pair_id, units.size());
      if (fresh) units.emplace_back();
      units[it->second].push_back(r.subject_id);
    } else {
      units.push_back({r.subject_id});
    }
  }
  const std::size_t n = placed.size();

  std::array<std::size_t, 3> counts{};
  if (request.counts && request.fractions) throw ValidationError("split: give counts or fractions, not both");
  if (request.counts) {
    counts = *request.counts;
  } else if (request.fractions) {
    counts = counts_from_fractions(n, *request.fractions);
  } else {
    throw ValidationError("split: counts or fractions required");
  }
  if (counts[0] + counts[1] + counts[2] != n) {
    throw ValidationError("split: counts " + std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" +
                          std::to_string(counts[2]) + " do not sum to the cohort size " + std::to_string(n));
  }

  Rng rng(derive_seed(seed, 0x5B117));
  std::shuffle(units.begin(), units.end(), rng);
  // Pairs are placed before singles so that odd counts can still be met.
  std::stable_partition(units.begin(), units.end(), [](const auto& u) { return u.size() > 1; });

  std::array<std::vector<std::string>, 3> out;
  std::array<std::size_t, 3> remaining = counts;
  for (const auto& unit : units) {
    bool done = false;
    for (std::size_t s = 0; s < 3 && !done; ++s) {
      if (remaining[s] >= unit.size()) {
        remaining[s] -= unit.size();
        out[s].insert(out[s].end(), unit.begin(), unit.end());
        done = true;
      }
    }
    if (!done) {
      throw ValidationError("split: counts " + std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" +
                            std::to_string(counts[2]) + " cannot be met without separating twin pairs");
    }
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return {std::move(out[0]), std::move(out[1]), std::move(out[2])};
}

void write_predictions(std::span<const stats::PredictionRecord> records, std::ostream& out) {
  out << kPredictionsHeader << '\n';
  for (const auto& r : records) {
    out << r.subject_id << ',' << (r.session ? std::to_string(*r.session) : "NA") << ','
        << format_number(r.chronological_age) << ',' << format_number(r.predicted_age) << ','
        << format_number(r.brain_pad) << '\n';
  }
  if (!out) throw IoError("failed writing predictions");
}

void write_predictions(std::span<const stats::PredictionRecord> records, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_predictions(records, out);
}

std::vector<stats::PredictionRecord> parse_predictions(std::istream& in) {
  const auto lines = read_lines(in);
  constexpr const char* kTable = "predictions";
  check_header(lines, kTable, kPredictionsHeader);
  std::vector<stats::PredictionRecord> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t line = li + 1;
    const auto f = split_fields(lines[li]);
    if (f.size() != kPredictionColumns.size()) {
      row_error(kTable, line, f.size() < kPredictionColumns.size() ? kPredictionColumns[f.size()] : "brain_pad_years",
                "expected 5 fields, found " + std::to_string(f.size()));
    }
    stats::PredictionRecord r;
    r.subject_id = f[0];
    if (r.subject_id.empty()) row_error(kTable, line, "subject_id", "missing");
    if (!is_na(f[1])) r.session = parse_int(f[1], kTable, line, "session");
    r.chronological_age = parse_double(f[2], kTable, line, "age_years");
    r.predicted_age = parse_double(f[3], kTable, line, "predicted_age_years");
    r.brain_pad = parse_double(f[4], kTable, line, "brain_pad_years");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<stats::PredictionRecord> read_predictions(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_predictions(in);
}

}  // namespace brainage::cohort
