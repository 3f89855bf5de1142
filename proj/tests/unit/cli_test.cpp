#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "brainage/cohort.hpp"
#include "brainage/nifti.hpp"
#include "brainage_cli/cli.hpp"
#include "oracles.hpp"

namespace {

namespace bt = brainage::testing;
namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "brainage");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = brainage::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

std::string predictions_text(const std::vector<std::tuple<std::string, int, double, double>>& rows) {
  std::string s = std::string(brainage::cohort::kPredictionsHeader) + "\n";
  for (const auto& [id, session, age, pred] : rows) {
    s += id + "," + std::to_string(session) + "," + brainage::cohort::format_number(age) + "," +
         brainage::cohort::format_number(pred) + "," + brainage::cohort::format_number(pred - age) + "\n";
  }
  return s;
}

TEST(Cli, UsageErrorsExitTwoWithOneErrorLine) {
  for (const auto& args : {std::vector<std::string>{}, {"frobnicate"}, {"evaluate"}, {"train", "--manifest"}}) {
    const auto r = run_cli(args);
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(r.err.rfind("error kind=usage code=2 message=\"", 0), 0u) << r.err;
    EXPECT_EQ(line_count(r.err), 1u);
  }
}

TEST(Cli, MissingFileIsIoExitFour) {
  const auto r = run_cli({"evaluate", "--predictions", "/nonexistent/p.csv"});
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(r.err.rfind("error kind=io code=4", 0), 0u) << r.err;
}

TEST(Cli, MalformedTableIsValidationExitTwo) {
  bt::TempDir dir("cli_bad");
  write_text(dir / "p.csv", std::string(brainage::cohort::kPredictionsHeader) + "\ns1,1,30,abc,0\n");
  const auto r = run_cli({"evaluate", "--predictions", (dir / "p.csv").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error kind=validation code=2", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("row 2"), std::string::npos);
}

TEST(Cli, EvaluatePerfectPredictions) {
  bt::TempDir dir("cli_eval");
  write_text(dir / "p.csv", predictions_text({{"a", 1, 20, 20}, {"b", 1, 40, 40}, {"c", 1, 60, 60}}));
  const auto r = run_cli({"evaluate", "--predictions", (dir / "p.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "n,mae,rmse,pearson_r,r_squared,r_squared_ss\n3,0,0,1,1,1\n");
  const auto to_file = run_cli({"evaluate", "--predictions", (dir / "p.csv").string(), "--out", (dir / "m.csv").string()});
  ASSERT_EQ(to_file.code, 0);
  EXPECT_EQ(slurp(dir / "m.csv"), r.out);
}

TEST(Cli, ReliabilityOfATableWithItselfIsOne) {
  bt::TempDir dir("cli_rel");
  write_text(dir / "p.csv", predictions_text({{"a", 1, 20, 23}, {"b", 1, 40, 38}, {"c", 1, 60, 61}, {"d", 1, 50, 55}}));
  const auto r = run_cli({"reliability", "--predictions", (dir / "p.csv").string(), "--predictions-b",
                          (dir / "p.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "pairing,icc,ci_low,ci_high,n_targets,n_raters,bms,jms,ems");
  EXPECT_EQ(r.out.find("files,1,"), r.out.find('\n') + 1) << r.out;

  const auto no_manifest = run_cli({"reliability", "--predictions", (dir / "p.csv").string()});
  EXPECT_EQ(no_manifest.code, 2);
  const auto bad_pairing = run_cli({"reliability", "--predictions", (dir / "p.csv").string(), "--predictions-b",
                                    (dir / "p.csv").string(), "--pairing", "sideways"});
  EXPECT_EQ(bad_pairing.code, 2);
}

TEST(Cli, ReliabilityPairsSessionsBySiteFromManifest) {
  bt::TempDir dir("cli_rel_sites");
  std::string manifest = std::string(brainage::cohort::kManifestHeader) + "\n";
  std::vector<std::tuple<std::string, int, double, double>> preds;
  const double pads[][3] = {{1, 1.5, 4}, {-3, -2, 0}, {6, 5, 9}, {0, 0.5, 2}, {2, 2.2, 6}};
  for (int i = 0; i < 5; ++i) {
    const std::string id = "s" + std::to_string(i);
    manifest += id + ",x.nii,40,NA,A,1,NA,NA\n" + id + ",y.nii,40,NA,A,2,NA,NA\n" + id + ",z.nii,40,NA,B,3,NA,NA\n";
    for (int k = 0; k < 3; ++k) preds.emplace_back(id, k + 1, 40.0, 40.0 + pads[i][k]);
  }
  write_text(dir / "m.csv", manifest);
  write_text(dir / "p.csv", predictions_text(preds));
  const auto within = run_cli({"reliability", "--predictions", (dir / "p.csv").string(), "--manifest",
                               (dir / "m.csv").string(), "--pairing", "within"});
  const auto between = run_cli({"reliability", "--predictions", (dir / "p.csv").string(), "--manifest",
                                (dir / "m.csv").string(), "--pairing", "between"});
  ASSERT_EQ(within.code, 0) << within.err;
  ASSERT_EQ(between.code, 0) << between.err;
  auto icc_of = [](const std::string& out) {
    const auto row = out.substr(out.find('\n') + 1);
    const auto a = row.find(',') + 1;
    return std::stod(row.substr(a, row.find(',', a) - a));
  };
  // Sessions 1 and 2 agree closely; site B carries a +3 offset.
  EXPECT_GT(icc_of(within.out), 0.9);
  EXPECT_LT(icc_of(between.out), icc_of(within.out));
  EXPECT_NE(within.out.find("\nwithin,"), std::string::npos);
  EXPECT_NE(between.out.find("\nbetween,"), std::string::npos);
}

TEST(Cli, HeritabilityReportsAllFitsInBothPanels) {
  bt::TempDir dir("cli_h2");
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0, 1);
  std::uniform_real_distribution<double> age(20, 80);
  std::string manifest = std::string(brainage::cohort::kManifestHeader) + "\n";
  std::vector<std::tuple<std::string, int, double, double>> preds;
  for (int p = 0; p < 300; ++p) {
    const bool mz = p < 150;
    const std::string pid = "p" + std::to_string(p);
    const double shared = z(rng), a = age(rng);
    for (const char* suffix : {"a", "b"}) {
      const double g = mz ? shared : std::sqrt(0.5) * shared + std::sqrt(0.5) * z(rng);
      const double pad = 4.0 * (std::sqrt(0.7) * g + std::sqrt(0.3) * z(rng));
      manifest += pid + suffix + ",v.nii," + std::to_string(a) + ",NA,A,1," + pid + (mz ? ",MZ\n" : ",DZ\n");
      preds.emplace_back(pid + suffix, 1, a, a + pad);
    }
  }
  write_text(dir / "m.csv", manifest);
  write_text(dir / "p.csv", predictions_text(preds));
  const auto r = run_cli({"heritability", "--predictions", (dir / "p.csv").string(), "--manifest",
                          (dir / "m.csv").string(), "--bootstrap", "20", "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(line_count(r.out), 9u);
  EXPECT_NE(r.out.find("unadjusted,selected,AE,"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("age_corrected,selected,AE,"), std::string::npos) << r.out;
  for (const char* fit : {"unadjusted,ace,ACE,", "unadjusted,ae,AE,", "unadjusted,e,E,", "age_corrected,e,E,"}) {
    EXPECT_NE(r.out.find(fit), std::string::npos) << fit;
  }
}

TEST(Cli, UnknownConfigKeyIsRejected) {
  bt::TempDir dir("cli_cfg");
  write_text(dir / "c.json", R"({"epochs": 2, "learning_rat": 0.1})");
  write_text(dir / "m.csv", std::string(brainage::cohort::kManifestHeader) + "\ns,v.nii,30,NA,A,1,NA,NA\n");
  const auto r = run_cli({"train", "--manifest", (dir / "m.csv").string(), "--config", (dir / "c.json").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("learning_rat"), std::string::npos) << r.err;
}

TEST(Cli, PhantomWritesReadableCohort) {
  bt::TempDir dir("cli_phantom");
  const auto r = run_cli({"phantom", "--out", dir.path().string(), "--n", "3", "--dims", "12", "--tissues",
                          "--rescans", "1", "--second-scanner", "--seed", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = brainage::cohort::read_manifest(dir / "manifest.csv");
  ASSERT_EQ(m.rows.size(), 9u);
  EXPECT_EQ(m.rows[0].session, 1);
  EXPECT_EQ(m.rows[1].session, 2);
  EXPECT_EQ(m.rows[2].site, "B");
  for (const auto& row : m.rows) {
    const auto v = brainage::read_nifti(dir / row.volume_path);
    EXPECT_EQ(v.dims(), (brainage::Extent3{12, 12, 12}));
  }
  EXPECT_TRUE(fs::exists(dir / "volumes" / "sub-00001_gm.nii"));
  EXPECT_TRUE(fs::exists(dir / "volumes" / "sub-00001_wm.nii"));

  bt::TempDir twins("cli_twins");
  const auto t = run_cli({"phantom", "--out", twins.path().string(), "--twins", "--n-mz", "2", "--n-dz", "2",
                          "--dims", "12"});
  ASSERT_EQ(t.code, 0) << t.err;
  const auto tm = brainage::cohort::read_manifest(twins / "manifest.csv");
  ASSERT_EQ(tm.rows.size(), 8u);
  EXPECT_EQ(tm.rows[0].pair_id, tm.rows[1].pair_id);
  EXPECT_EQ(tm.rows[6].zygosity, brainage::stats::Zygosity::kDZ);
}

TEST(Cli, GprTrainPredictEvaluatePipeline) {
  bt::TempDir dir("cli_gpr");
  ASSERT_EQ(run_cli({"phantom", "--out", dir.path().string(), "--n", "40", "--dims", "12", "--seed", "2"}).code, 0);
  const auto manifest = (dir / "manifest.csv").string();
  const auto train = run_cli({"train", "--manifest", manifest, "--method", "gpr", "--out", (dir / "run").string(),
                              "--split-counts", "30,5,5", "--seed", "4"});
  ASSERT_EQ(train.code, 0) << train.err;
  for (const char* f : {"model.gpr", "split.csv", "history.csv", "predictions_test.csv", "metrics_test.csv"}) {
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  }
  EXPECT_EQ(line_count(slurp(dir / "run" / "split.csv")), 41u);

  const auto pred = run_cli({"predict", "--model", (dir / "run" / "model.gpr").string(), "--manifest", manifest,
                             "--out", (dir / "all.csv").string()});
  ASSERT_EQ(pred.code, 0) << pred.err;
  const auto records = brainage::cohort::read_predictions(dir / "all.csv");
  ASSERT_EQ(records.size(), 40u);
  for (const auto& r : records) EXPECT_DOUBLE_EQ(r.brain_pad, r.predicted_age - r.chronological_age);

  const auto eval = run_cli({"evaluate", "--predictions", (dir / "all.csv").string()});
  ASSERT_EQ(eval.code, 0) << eval.err;
  const auto row = eval.out.substr(eval.out.find('\n') + 1);
  EXPECT_EQ(row.rfind("40,", 0), 0u);
  const double mae = std::stod(row.substr(3));
  double mean_age = 0.0, baseline = 0.0;
  for (const auto& r : records) mean_age += r.chronological_age / 40.0;
  for (const auto& r : records) baseline += std::abs(r.chronological_age - mean_age) / 40.0;
  EXPECT_LT(mae, 0.8 * baseline) << "should beat predicting the mean age";
}

TEST(Cli, CnnTrainPredictPipeline) {
  bt::TempDir dir("cli_cnn");
  ASSERT_EQ(run_cli({"phantom", "--out", dir.path().string(), "--n", "12", "--dims", "16", "--seed", "3"}).code, 0);
  write_text(dir / "c.json", R"({"epochs": 2, "restarts": 1, "num_blocks": 2, "base_feature_maps": 2})");
  const auto manifest = (dir / "manifest.csv").string();
  const auto train = run_cli({"train", "--manifest", manifest, "--config", (dir / "c.json").string(), "--out",
                              (dir / "run").string(), "--split-counts", "8,2,2", "--deterministic"});
  ASSERT_EQ(train.code, 0) << train.err;
  EXPECT_TRUE(fs::exists(dir / "run" / "model.ckpt"));
  // Header plus 2 epochs of one restart.
  EXPECT_GE(line_count(slurp(dir / "run" / "history.csv")), 3u);
  const auto pred = run_cli({"predict", "--model", (dir / "run" / "model.ckpt").string(), "--manifest", manifest,
                             "--out", (dir / "all.csv").string()});
  ASSERT_EQ(pred.code, 0) << pred.err;
  EXPECT_EQ(brainage::cohort::read_predictions(dir / "all.csv").size(), 12u);

  // A model trained on 16^3 volumes cannot read 12^3 ones.
  bt::TempDir other("cli_cnn_other");
  ASSERT_EQ(run_cli({"phantom", "--out", other.path().string(), "--n", "2", "--dims", "12"}).code, 0);
  const auto mismatch = run_cli({"predict", "--model", (dir / "run" / "model.ckpt").string(), "--manifest",
                                 (other / "manifest.csv").string(), "--out", (other / "p.csv").string()});
  EXPECT_EQ(mismatch.code, 2);
  EXPECT_EQ(mismatch.err.rfind("error kind=shape code=2", 0), 0u) << mismatch.err;
}

TEST(Cli, GradcheckPasses) {
  const auto r = run_cli({"gradcheck", "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("layer,max_rel_error,tolerance,status\n", 0), 0u);
  EXPECT_EQ(r.out.find(",fail"), std::string::npos);
}

}  // namespace
