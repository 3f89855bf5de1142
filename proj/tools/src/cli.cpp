#include "brainage_cli/cli.hpp"

#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "brainage/error.hpp"
#include "brainage/parallel.hpp"
#include "brainage_cli/commands.hpp"

namespace brainage::cli {

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation:
    case ErrorKind::kFormat:
    case ErrorKind::kShape: return 2;
    case ErrorKind::kNumeric: return 3;
    case ErrorKind::kIo: return 4;
  }
  return 1;
}

void report(std::ostream& err, const char* kind, int code, const std::string& message) {
  // JSON string escaping keeps the message on one line.
  err << "error kind=" << kind << " code=" << code << " message=" << nlohmann::json(message).dump() << '\n';
}

struct Shared {
  std::string manifest;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string input_kind;
  bool deterministic = false;
  std::size_t threads = 0;
};

void add_common(CLI::App* cmd, Shared& s) {
  cmd->add_option("--seed", s.seed, "Master seed");
  cmd->add_flag("--deterministic", s.deterministic, "Single-threaded, bit-reproducible execution");
  cmd->add_option("--threads", s.threads, "Worker threads (default: hardware concurrency)");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Brain-age prediction from 3D volumes, with biomarker statistics"};
  app.require_subcommand(1);
  Shared s;

  auto* train = app.add_subcommand("train", "Train a CNN or GPR model on a manifest cohort");
  std::string method;
  std::optional<std::size_t> epochs, restarts;
  std::vector<std::size_t> counts;
  std::vector<double> fractions;
  train->add_option("--manifest", s.manifest, "Cohort manifest (CSV)")->required();
  train->add_option("--config", s.config, "JSON run configuration");
  train->add_option("--out", s.out, "Output directory");
  train->add_option("--input-kind", s.input_kind, "gm | wm | gm+wm | raw");
  train->add_option("--method", method, "cnn | gpr");
  train->add_option("--epochs", epochs, "Override the epoch count");
  train->add_option("--restarts", restarts, "Override the number of restarts");
  train->add_option("--split-counts", counts, "train,val,test subject counts")->delimiter(',')->expected(3);
  train->add_option("--split-fractions", fractions, "train,val,test fractions")->delimiter(',')->expected(3);
  add_common(train, s);

  auto* predict = app.add_subcommand("predict", "Predict ages for every manifest row");
  PredictOptions po;
  std::string model_path;
  predict->add_option("--model", model_path, "model.ckpt or model.gpr")->required();
  predict->add_option("--manifest", s.manifest, "Cohort manifest (CSV)")->required();
  predict->add_option("--out", s.out, "Predictions table to write")->required();
  predict->add_option("--input-kind", s.input_kind, "gm | wm | gm+wm | raw");
  add_common(predict, s);

  auto* evaluate = app.add_subcommand("evaluate", "Accuracy metrics of a predictions table");
  std::string predictions, predictions_b;
  evaluate->add_option("--predictions", predictions, "Predictions table")->required();
  evaluate->add_option("--out", s.out, "Report file (default: stdout)");
  add_common(evaluate, s);

  auto* heritability = app.add_subcommand("heritability", "ACE / AE / E twin models of brain-PAD");
  std::size_t bootstrap = 1000;
  heritability->add_option("--predictions", predictions, "Predictions table")->required();
  heritability->add_option("--manifest", s.manifest, "Manifest with pair_id and zygosity")->required();
  heritability->add_option("--out", s.out, "Report file (default: stdout)");
  heritability->add_option("--bootstrap", bootstrap, "Bootstrap resamples for the h2 standard error");
  add_common(heritability, s);

  auto* reliability = app.add_subcommand("reliability", "ICC(2,1) of brain-PAD across sessions or scanners");
  std::string pairing = "within";
  reliability->add_option("--predictions", predictions, "Predictions table")->required();
  reliability->add_option("--predictions-b", predictions_b, "Second predictions table, matched by subject_id");
  reliability->add_option("--manifest", s.manifest, "Manifest giving each session's site");
  reliability->add_option("--pairing", pairing, "within | between");
  reliability->add_option("--out", s.out, "Report file (default: stdout)");
  add_common(reliability, s);

  auto* phantom = app.add_subcommand("phantom", "Write a synthetic phantom cohort");
  PhantomOptions ph;
  phantom->add_option("--out", s.out, "Output directory")->required();
  phantom->add_option("--n", ph.n, "Subjects (ignored with --twins)");
  phantom->add_option("--dims", ph.dims, "Cube edge in voxels");
  phantom->add_option("--age-min", ph.age_min);
  phantom->add_option("--age-max", ph.age_max);
  phantom->add_flag("--tissues", ph.tissues, "Also write _gm / _wm maps");
  phantom->add_flag("--twins", ph.twins, "Generate MZ / DZ twin pairs");
  phantom->add_option("--n-mz", ph.n_mz);
  phantom->add_option("--n-dz", ph.n_dz);
  phantom->add_option("--a2", ph.a2);
  phantom->add_option("--c2", ph.c2);
  phantom->add_option("--e2", ph.e2);
  phantom->add_option("--offset-sd", ph.offset_sd, "SD (years) of the latent brain-age offset");
  phantom->add_option("--rescans", ph.rescans, "Extra noise-only sessions at site A");
  phantom->add_flag("--second-scanner", ph.second_scanner, "Extra session at site B through a scanner effect");
  phantom->add_option("--gain", ph.gain);
  phantom->add_option("--bias-amplitude", ph.bias_amplitude);
  phantom->add_option("--extra-noise", ph.extra_noise);
  add_common(phantom, s);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks per layer");
  gradcheck->add_option("--out", s.out, "Report file (default: stdout)");
  add_common(gradcheck, s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    report(err, "usage", 2, e.what());
    return 2;
  }

  auto optional_path = [](const std::string& p) { return p.empty() ? std::nullopt : std::optional<std::filesystem::path>(p); };
  try {
    const std::size_t threads =
        s.deterministic ? 1 : (s.threads ? s.threads : std::max(1u, std::thread::hardware_concurrency()));
    set_num_threads(threads);
    const std::uint64_t seed = s.seed.value_or(0);

    if (app.got_subcommand(train)) {
      TrainOptions to;
      to.manifest = s.manifest;
      if (!s.config.empty()) to.config = load_config(s.config);
      if (s.seed) to.config.set_seed(*s.seed);
      if (!s.out.empty()) to.config.out = s.out;
      if (!s.input_kind.empty()) to.config.input_kind = parse_input_kind(s.input_kind);
      if (!method.empty()) to.config.method = parse_method(method);
      if (epochs) to.config.train.epochs = *epochs;
      if (restarts) to.config.train.restarts = *restarts;
      if (!counts.empty()) to.config.split = {std::array<std::size_t, 3>{counts[0], counts[1], counts[2]}, std::nullopt};
      if (!fractions.empty()) to.config.split = {std::nullopt, std::array<double, 3>{fractions[0], fractions[1], fractions[2]}};
      cmd_train(to, out);
    } else if (app.got_subcommand(predict)) {
      po.model = model_path;
      po.manifest = s.manifest;
      po.out = s.out;
      if (!s.input_kind.empty()) po.input_kind = parse_input_kind(s.input_kind);
      cmd_predict(po, out);
    } else if (app.got_subcommand(evaluate)) {
      cmd_evaluate({predictions, optional_path(s.out)}, out);
    } else if (app.got_subcommand(heritability)) {
      cmd_heritability({predictions, s.manifest, optional_path(s.out), seed, bootstrap}, out);
    } else if (app.got_subcommand(reliability)) {
      ReliabilityOptions ro;
      ro.predictions = predictions;
      ro.predictions_b = optional_path(predictions_b);
      ro.manifest = optional_path(s.manifest);
      if (pairing == "within") ro.pairing = Pairing::kWithin;
      else if (pairing == "between") ro.pairing = Pairing::kBetween;
      else throw ValidationError("--pairing must be within or between");
      ro.out = optional_path(s.out);
      cmd_reliability(ro, out);
    } else if (app.got_subcommand(phantom)) {
      ph.out = s.out;
      ph.seed = seed;
      cmd_phantom(ph, out);
    } else if (app.got_subcommand(gradcheck)) {
      if (!cmd_gradcheck({seed, optional_path(s.out)}, out)) {
        report(err, "numeric", 3, "gradient check failed");
        return 3;
      }
    }
  } catch (const Error& e) {
    const int code = exit_code(e.kind());
    report(err, to_string(e.kind()), code, e.what());
    return code;
  } catch (const std::exception& e) {
    report(err, "internal", 1, e.what());
    return 1;
  }
  return 0;
}

}  // namespace brainage::cli
