#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "brainage/cohort.hpp"
#include "brainage/error.hpp"
#include "oracles.hpp"

namespace {

namespace co = brainage::cohort;
namespace bt = brainage::testing;

std::string header() { return std::string(co::kManifestHeader) + "\n"; }

co::Manifest parse(const std::string& text) {
  std::istringstream in(text);
  return co::parse_manifest(in);
}

// Expects a ValidationError whose message contains every fragment.
void expect_manifest_error(const std::string& text, std::initializer_list<std::string> fragments) {
  try {
    parse(text);
    ADD_FAILURE() << "no error for:\n" << text;
  } catch (const brainage::ValidationError& e) {
    for (const auto& f : fragments) EXPECT_NE(std::string(e.what()).find(f), std::string::npos) << e.what();
  }
}

co::Manifest singles(std::size_t n) {
  co::Manifest m;
  for (std::size_t i = 0; i < n; ++i) {
    co::ManifestRow r;
    r.subject_id = "s" + std::to_string(i);
    r.volume_path = r.subject_id + ".nii";
    r.age_years = 20.0 + static_cast<double>(i % 70);
    r.site = "A";
    m.rows.push_back(r);
  }
  return m;
}

void add_pair(co::Manifest& m, const std::string& pair, brainage::stats::Zygosity z) {
  for (const char* suffix : {"a", "b"}) {
    co::ManifestRow r;
    r.subject_id = pair + suffix;
    r.volume_path = r.subject_id + ".nii";
    r.age_years = 40.0;
    r.site = "A";
    r.pair_id = pair;
    r.zygosity = z;
    m.rows.push_back(r);
  }
}

std::set<std::string> all_ids(const co::Split& s) {
  std::set<std::string> ids;
  for (const auto* part : {&s.train, &s.val, &s.test}) ids.insert(part->begin(), part->end());
  return ids;
}

// --------------------------------------------------------------- manifest

TEST(Manifest, ParsesAllColumns) {
  const auto m = parse(header() +
                       "s1,data/s1.nii,34.5,F,siteA,1,NA,NA\n"
                       "t1a,t1a.nii,50,M,siteB,2,p1,MZ\n"
                       "t1b,t1b.nii,50,NA,NA,1,p1,MZ\n");
  ASSERT_EQ(m.rows.size(), 3u);
  EXPECT_EQ(m.rows[0].subject_id, "s1");
  EXPECT_EQ(m.rows[0].volume_path, "data/s1.nii");
  EXPECT_DOUBLE_EQ(m.rows[0].age_years, 34.5);
  EXPECT_EQ(m.rows[0].sex, co::Sex::kFemale);
  EXPECT_EQ(m.rows[0].site, "siteA");
  EXPECT_FALSE(m.rows[0].pair_id.has_value());
  EXPECT_EQ(m.rows[1].sex, co::Sex::kMale);
  EXPECT_EQ(m.rows[1].session, 2);
  EXPECT_EQ(m.rows[1].pair_id, "p1");
  EXPECT_EQ(m.rows[1].zygosity, brainage::stats::Zygosity::kMZ);
  EXPECT_EQ(m.rows[2].sex, co::Sex::kUnknown);
}

TEST(Manifest, WriteThenParseRoundTrips) {
  auto m = singles(5);
  m.rows[2].age_years = 0.1 + 0.2;  // needs all 17 significant digits
  add_pair(m, "dz7", brainage::stats::Zygosity::kDZ);
  std::ostringstream out;
  co::write_manifest(m, out);
  const auto back = parse(out.str());
  ASSERT_EQ(back.rows.size(), m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].subject_id, m.rows[i].subject_id);
    EXPECT_EQ(back.rows[i].age_years, m.rows[i].age_years);
    EXPECT_EQ(back.rows[i].pair_id, m.rows[i].pair_id);
    EXPECT_EQ(back.rows[i].zygosity, m.rows[i].zygosity);
  }
}

TEST(Manifest, ErrorsNameRowAndColumn) {
  expect_manifest_error("subject_id,age\n", {"row 1", "header"});
  expect_manifest_error(header(), {"no data rows"});
  expect_manifest_error(header() + "s1,s1.nii,34,F,A,1,NA,NA\ns2,s2.nii,abc,F,A,1,NA,NA\n", {"row 3", "age_years"});
  expect_manifest_error(header() + "s1,s1.nii,150,F,A,1,NA,NA\n", {"row 2", "age_years"});
  expect_manifest_error(header() + "s1,s1.nii,34,X,A,1,NA,NA\n", {"row 2", "sex"});
  expect_manifest_error(header() + "s1,s1.nii,34,F,A,one,NA,NA\n", {"row 2", "session"});
  expect_manifest_error(header() + "s1,s1.nii,34,F,A,1\n", {"row 2", "pair_id", "found 6"});
  expect_manifest_error(header() + ",s1.nii,34,F,A,1,NA,NA\n", {"row 2", "subject_id"});
  expect_manifest_error(header() + "s1,s1.nii,34,F,A,1,p1,NA\n", {"row 2", "zygosity"});
  expect_manifest_error(header() + "s1,s1.nii,34,F,A,1,p1,XZ\n", {"row 2", "zygosity"});
  expect_manifest_error(header() + "s1,a.nii,34,F,A,1,NA,NA\ns1,b.nii,34,F,A,1,NA,NA\n", {"row 3", "duplicate"});
  expect_manifest_error(header() + "a,a.nii,34,F,A,1,p1,MZ\n", {"row 2", "only one subject"});
  expect_manifest_error(header() + "a,a.nii,34,F,A,1,p1,MZ\nb,b.nii,34,F,A,1,p1,DZ\n", {"row 3", "conflicting"});
  expect_manifest_error(header() + "a,a.nii,34,F,A,1,p1,MZ\nb,b.nii,34,F,A,1,p1,MZ\nc,c.nii,34,F,A,1,p1,MZ\n",
                        {"row 4", "more than two"});
}

TEST(Manifest, MultipleSessionsOfOneSubjectAreAllowed) {
  const auto m = parse(header() + "s1,a.nii,34,F,A,1,NA,NA\ns1,b.nii,34,F,B,2,NA,NA\n");
  EXPECT_EQ(m.rows.size(), 2u);
}

TEST(Manifest, MissingFileIsIoError) {
  EXPECT_THROW(co::read_manifest("/nonexistent/manifest.csv"), brainage::IoError);
}

// ------------------------------------------------------------------ split

TEST(Split, CountsFromFractions) {
  EXPECT_EQ(co::counts_from_fractions(2001, {0.8, 0.1, 0.1}), (std::array<std::size_t, 3>{1601, 200, 200}));
  EXPECT_EQ(co::counts_from_fractions(600, {0.8, 0.1, 0.1}), (std::array<std::size_t, 3>{480, 60, 60}));
  EXPECT_EQ(co::counts_from_fractions(10, {0.2, 0.5, 0.3}), (std::array<std::size_t, 3>{2, 5, 3}));
  EXPECT_THROW(co::counts_from_fractions(10, {0.5, 0.5, 0.5}), brainage::ValidationError);
  EXPECT_THROW(co::counts_from_fractions(10, {1.0, 0.0, 0.0}), brainage::ValidationError);
}

TEST(Split, PartitionsSubjectsWithRequestedCounts) {
  const auto m = singles(2001);
  const auto s = co::split_cohort(m, {.fractions = std::array<double, 3>{0.8, 0.1, 0.1}}, 42);
  EXPECT_EQ(s.train.size(), 1601u);
  EXPECT_EQ(s.val.size(), 200u);
  EXPECT_EQ(s.test.size(), 200u);
  EXPECT_EQ(all_ids(s).size(), 2001u);
}

TEST(Split, DeterministicPerSeed) {
  const auto m = singles(100);
  const co::SplitRequest req{.counts = std::array<std::size_t, 3>{60, 20, 20}};
  const auto a = co::split_cohort(m, req, 1), b = co::split_cohort(m, req, 1), c = co::split_cohort(m, req, 2);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
}

TEST(Split, TwinsAndSessionsStayTogether) {
  auto m = singles(31);
  for (int p = 0; p < 20; ++p) add_pair(m, "pair" + std::to_string(p), p % 2 ? brainage::stats::Zygosity::kMZ
                                                                              : brainage::stats::Zygosity::kDZ);
  co::ManifestRow second = m.rows[0];
  second.session = 2;
  m.rows.push_back(second);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = co::split_cohort(m, {.counts = std::array<std::size_t, 3>{51, 10, 10}}, seed);
    EXPECT_EQ(s.train.size(), 51u);
    EXPECT_EQ(all_ids(s).size(), 71u);
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      const std::set<std::string> ids(part->begin(), part->end());
      EXPECT_EQ(ids.size(), part->size()) << "a subject appears twice";
      for (int p = 0; p < 20; ++p) {
        const std::string base = "pair" + std::to_string(p);
        EXPECT_EQ(ids.count(base + "a"), ids.count(base + "b")) << base << " split apart";
      }
    }
  }
}

TEST(Split, InfeasibleRequestsAreRejected) {
  auto m = singles(10);
  EXPECT_THROW(co::split_cohort(m, {.counts = std::array<std::size_t, 3>{5, 3, 3}}, 0), brainage::ValidationError);
  EXPECT_THROW(co::split_cohort(m, {}, 0), brainage::ValidationError);
  EXPECT_THROW(co::split_cohort(m,
                                {.counts = std::array<std::size_t, 3>{8, 1, 1},
                                 .fractions = std::array<double, 3>{0.8, 0.1, 0.1}},
                                0),
               brainage::ValidationError);
  co::Manifest twins;
  add_pair(twins, "p1", brainage::stats::Zygosity::kMZ);
  add_pair(twins, "p2", brainage::stats::Zygosity::kMZ);
  try {
    co::split_cohort(twins, {.counts = std::array<std::size_t, 3>{3, 1, 0}}, 0);
    FAIL() << "expected ValidationError";
  } catch (const brainage::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("twin pairs"), std::string::npos);
  }
}

// ------------------------------------------------------------ predictions

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(co::format_number(0.1), "0.1");
  EXPECT_EQ(co::format_number(42.0), "42");
  EXPECT_EQ(co::format_number(-3.25), "-3.25");
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    EXPECT_EQ(std::stod(co::format_number(x)), x);
  }
}

TEST(Predictions, FileRoundTripIsExact) {
  std::vector<brainage::stats::PredictionRecord> records{
      {"s1", 30.5, 33.0 + 1e-13, 2.5 + 1e-13, {}, 1},
      {"s2", 71.0, 64.123456789, -6.876543211, {}, {}},
  };
  bt::TempDir dir("predictions");
  const auto path = dir / "p.csv";
  co::write_predictions(records, path);
  const auto back = co::read_predictions(path);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].subject_id, records[i].subject_id);
    EXPECT_EQ(back[i].chronological_age, records[i].chronological_age);
    EXPECT_EQ(back[i].predicted_age, records[i].predicted_age);
    EXPECT_EQ(back[i].brain_pad, records[i].brain_pad);
    EXPECT_EQ(back[i].session, records[i].session);
  }
}

TEST(Predictions, MalformedRowsNameRowAndColumn) {
  std::istringstream in(std::string(co::kPredictionsHeader) + "\ns1,1,30,abc,0\n");
  try {
    co::parse_predictions(in);
    FAIL() << "expected ValidationError";
  } catch (const brainage::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("predicted_age_years"), std::string::npos);
  }
}

}  // namespace
