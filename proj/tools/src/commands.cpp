#include "brainage_cli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "brainage/checkpoint.hpp"
#include "brainage/error.hpp"
#include "brainage/gradcheck.hpp"
#include "brainage/icc.hpp"
#include "brainage/nifti.hpp"
#include "brainage/phantom.hpp"
#include "brainage_cli/dataset.hpp"

namespace brainage::cli {

namespace fs = std::filesystem;
using cohort::format_number;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Writes to a file when a path is given, otherwise to the fallback stream.
template <typename F>
void emit(const std::optional<fs::path>& path, std::ostream& fallback, F&& body) {
  if (path) {
    auto out = open_out(*path);
    body(out);
    if (!out) throw IoError("failed writing " + path->string());
  } else {
    body(fallback);
  }
}

std::string na_or(double v) { return std::isnan(v) ? std::string("NA") : format_number(v); }

class LogObserver : public model::TrainObserver {
 public:
  LogObserver(std::ostream& log, std::string label) : log_(log), label_(std::move(label)) {}
  void on_epoch(std::size_t restart, const model::EpochRecord& r) override {
    log_ << label_ << " restart " << restart << " epoch " << r.epoch << " lr " << r.learning_rate << " train_mae "
         << r.train_mae << " val_mae " << r.val_mae << '\n';
  }

 private:
  std::ostream& log_;
  std::string label_;
};

std::vector<model::Subject> load_subjects(const std::vector<const cohort::ManifestRow*>& rows, InputKind kind,
                                          const fs::path& dir) {
  std::vector<model::Subject> out;
  out.reserve(rows.size());
  for (const auto* r : rows) out.push_back(load_subject(*r, kind, dir));
  return out;
}

model::ArchitectureSpec spec_for(const RunConfig& c, const model::Subject& first) {
  model::ArchitectureSpec spec;
  spec.input_dims = first.volumes.at(0).dims();
  spec.input_channels = 1;
  spec.base_feature_maps = c.base_feature_maps;
  spec.num_blocks = c.num_blocks;
  spec.zscore_input = c.zscore_input;
  spec.validate();
  return spec;
}

// Selects one branch's volume for every subject.
std::vector<model::Subject> branch_view(const std::vector<model::Subject>& subjects, std::size_t b) {
  std::vector<model::Subject> out;
  out.reserve(subjects.size());
  for (const auto& s : subjects) out.push_back({s.id, {s.volumes.at(b)}, s.age});
  return out;
}

void write_history(const fs::path& path, const std::vector<std::pair<std::string, model::TrainResult>>& runs) {
  auto out = open_out(path);
  out << "stage,restart,epoch,learning_rate,train_mae,val_mae\n";
  for (const auto& [stage, result] : runs) {
    for (std::size_t r = 0; r < result.restart_histories.size(); ++r) {
      for (const auto& e : result.restart_histories[r].epochs) {
        out << stage << ',' << r << ',' << e.epoch << ',' << format_number(e.learning_rate) << ','
            << format_number(e.train_mae) << ',' << format_number(e.val_mae) << '\n';
      }
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<stats::PredictionRecord> records_for(const std::vector<const cohort::ManifestRow*>& rows,
                                                 const std::vector<double>& predicted) {
  std::vector<stats::PredictionRecord> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    stats::PredictionRecord r;
    r.subject_id = rows[i]->subject_id;
    r.chronological_age = rows[i]->age_years;
    r.predicted_age = predicted[i];
    r.site = rows[i]->site;
    r.session = rows[i]->session;
    out.push_back(std::move(r));
  }
  return stats::brain_pad(std::move(out));
}

void write_metrics(std::ostream& out, const stats::MetricsReport& m) {
  out << "n,mae,rmse,pearson_r,r_squared,r_squared_ss\n"
      << m.n << ',' << format_number(m.mae) << ',' << format_number(m.rmse) << ',' << na_or(m.pearson_r) << ','
      << na_or(m.r_squared) << ',' << na_or(m.r_squared_ss) << '\n';
}

stats::MetricsReport metrics_of(const std::vector<stats::PredictionRecord>& records) {
  std::vector<double> p, a;
  for (const auto& r : records) {
    p.push_back(r.predicted_age);
    a.push_back(r.chronological_age);
  }
  return stats::compute_metrics(p, a);
}

}  // namespace

void cmd_train(const TrainOptions& options, std::ostream& log) {
  RunConfig c = options.config;
  c.validate();
  if (c.out.empty()) throw ValidationError("train: --out is required");
  const auto manifest = cohort::read_manifest(options.manifest);
  const fs::path dir = options.manifest.parent_path();
  const auto split = cohort::split_cohort(manifest, c.split, c.seed);

  std::map<std::string, const cohort::ManifestRow*> by_id;
  for (const auto* r : first_sessions(manifest)) by_id[r->subject_id] = r;
  auto rows_of = [&](const std::vector<std::string>& ids) {
    std::vector<const cohort::ManifestRow*> rows;
    for (const auto& id : ids) rows.push_back(by_id.at(id));
    return rows;
  };
  const auto train_rows = rows_of(split.train), val_rows = rows_of(split.val), test_rows = rows_of(split.test);
  if (train_rows.empty() || val_rows.empty()) throw ValidationError("train: training and validation sets must be non-empty");

  ensure_dir(c.out);
  {
    auto out = open_out(c.out / "split.csv");
    out << "subject_id,split\n";
    for (const auto& id : split.train) out << id << ",train\n";
    for (const auto& id : split.val) out << id << ",val\n";
    for (const auto& id : split.test) out << id << ",test\n";
  }

  const auto train_set = load_subjects(train_rows, c.input_kind, dir);
  const auto val_set = load_subjects(val_rows, c.input_kind, dir);
  const auto test_set = load_subjects(test_rows, c.input_kind, dir);
  log << "train " << train_set.size() << " val " << val_set.size() << " test " << test_set.size() << " subjects\n";

  std::vector<double> test_pred;
  if (c.method == Method::kGpr) {
    const auto x = feature_matrix(train_set);
    std::vector<double> ages;
    for (const auto& s : train_set) ages.push_back(s.age);
    const auto fitted = gpr::gpr_fit(x, ages);
    const auto linear = to_linear_model(fitted, x, c.input_kind, train_set[0].volumes[0].dims(), train_set[0].volumes.size());
    save_gpr_model(linear, c.out / "model.gpr");
    const auto val_pred = linear.predict(val_set);
    double mae = 0.0;
    for (std::size_t i = 0; i < val_set.size(); ++i) mae += std::abs(val_pred[i] - val_set[i].age);
    log << "gpr s " << fitted.hyper.s << " sigma2 " << fitted.hyper.sigma2 << " val_mae " << mae / val_set.size() << '\n';
    auto out = open_out(c.out / "history.csv");
    out << "stage,s,sigma2,log_marginal_likelihood,val_mae\n"
        << "gpr," << format_number(fitted.hyper.s) << ',' << format_number(fitted.hyper.sigma2) << ','
        << format_number(fitted.log_marginal_likelihood) << ',' << format_number(mae / val_set.size()) << '\n';
    if (!test_set.empty()) test_pred = linear.predict(test_set);
  } else {
    std::vector<std::pair<std::string, model::TrainResult>> runs;
    std::optional<model::Checkpoint> best;
    const model::ArchitectureSpec spec = spec_for(c, train_set.at(0));
    if (c.input_kind == InputKind::kGmWm) {
      // Each tissue branch is trained alone, then joined under a fresh head.
      std::vector<model::Network<float>> branches;
      for (std::size_t b = 0; b < 2; ++b) {
        const std::string stage = b == 0 ? "gm" : "wm";
        LogObserver obs(log, stage);
        model::TrainConfig tc = c.train;
        tc.seed = derive_seed(c.seed, 0xB0 + b);
        auto result = model::train(model::build_single_branch(spec, tc.seed), branch_view(train_set, b),
                                   branch_view(val_set, b), tc, &obs);
        branches.push_back(result.checkpoint.model);
        runs.emplace_back(stage, std::move(result));
      }
      LogObserver obs(log, "fused");
      auto fused = model::build_fused(branches[0], branches[1], derive_seed(c.seed, 0xF0));
      auto result = model::train(std::move(fused), train_set, val_set, c.train, &obs);
      best = result.checkpoint;
      runs.emplace_back("fused", std::move(result));
    } else {
      LogObserver obs(log, "cnn");
      auto result = model::train(model::build_single_branch(spec, c.seed), train_set, val_set, c.train, &obs);
      best = result.checkpoint;
      runs.emplace_back("cnn", std::move(result));
    }
    model::save_checkpoint(*best, c.out / "model.ckpt");
    write_history(c.out / "history.csv", runs);
    log << "best val_mae " << best->metadata.best_val_mae << " (restart " << best->metadata.restart << ", epoch "
        << best->metadata.best_epoch << ")\n";
    if (!test_set.empty()) test_pred = model::predict(best->model, test_set);
  }

  if (!test_set.empty()) {
    const auto records = records_for(test_rows, test_pred);
    cohort::write_predictions(records, c.out / "predictions_test.csv");
    if (records.size() >= 2) {
      const auto m = metrics_of(records);
      auto out = open_out(c.out / "metrics_test.csv");
      write_metrics(out, m);
      log << "test mae " << m.mae << " r " << m.pearson_r << '\n';
    }
  }
}

void cmd_predict(const PredictOptions& options, std::ostream& log) {
  const auto manifest = cohort::read_manifest(options.manifest);
  const fs::path dir = options.manifest.parent_path();
  std::vector<const cohort::ManifestRow*> rows;
  for (const auto& r : manifest.rows) rows.push_back(&r);

  std::vector<double> predicted;
  if (is_cnn_checkpoint(options.model)) {
    auto ckpt = model::load_checkpoint(options.model);
    const InputKind kind = ckpt.model.spec().branches == 2 ? InputKind::kGmWm : options.input_kind.value_or(InputKind::kRaw);
    if (ckpt.model.spec().branches == 2 && options.input_kind && *options.input_kind != InputKind::kGmWm) {
      throw ValidationError("predict: the checkpoint is a fused gm+wm model");
    }
    // Volumes are loaded in chunks to bound memory on large cohorts.
    constexpr std::size_t kChunk = 64;
    for (std::size_t lo = 0; lo < rows.size(); lo += kChunk) {
      const std::vector<const cohort::ManifestRow*> part(rows.begin() + lo, rows.begin() + std::min(rows.size(), lo + kChunk));
      const auto subjects = load_subjects(part, kind, dir);
      const auto p = model::predict(ckpt.model, subjects);
      predicted.insert(predicted.end(), p.begin(), p.end());
    }
  } else {
    const auto m = load_gpr_model(options.model);
    if (options.input_kind && *options.input_kind != m.input_kind) {
      throw ValidationError(std::string("predict: the GPR model was trained on ") + to_string(m.input_kind) + " input");
    }
    const auto subjects = load_subjects(rows, m.input_kind, dir);
    predicted = m.predict(subjects);
  }
  const auto records = records_for(rows, predicted);
  cohort::write_predictions(records, options.out);
  log << "wrote " << records.size() << " predictions to " << options.out.string() << '\n';
}

void cmd_evaluate(const EvaluateOptions& options, std::ostream& out) {
  const auto records = cohort::read_predictions(options.predictions);
  const auto m = metrics_of(records);
  emit(options.out, out, [&](std::ostream& o) { write_metrics(o, m); });
}

namespace {

std::vector<stats::TwinPair> twin_pairs(const std::vector<stats::PredictionRecord>& records,
                                        const cohort::Manifest& manifest, bool age_corrected) {
  // One prediction per subject: the lowest session.
  std::map<std::string, const stats::PredictionRecord*> pred;
  for (const auto& r : records) {
    auto [it, fresh] = pred.try_emplace(r.subject_id, &r);
    if (!fresh && r.session.value_or(0) < it->second->session.value_or(0)) it->second = &r;
  }
  struct Member {
    std::string id;
    stats::Zygosity zygosity;
  };
  std::map<std::string, std::vector<Member>> pairs;
  for (const auto* row : first_sessions(manifest)) {
    if (!row->pair_id) continue;
    if (!pred.count(row->subject_id)) throw ValidationError("heritability: no prediction for twin " + row->subject_id);
    pairs[*row->pair_id].push_back({row->subject_id, *row->zygosity});
  }
  std::vector<std::string> ids;
  for (auto& [pid, members] : pairs) {
    std::sort(members.begin(), members.end(), [](const Member& a, const Member& b) { return a.id < b.id; });
    for (const auto& m : members) ids.push_back(m.id);
  }
  std::vector<double> phen, ages;
  for (const auto& id : ids) {
    phen.push_back(pred.at(id)->brain_pad);
    ages.push_back(pred.at(id)->chronological_age);
  }
  if (age_corrected) phen = stats::age_correct(phen, ages);
  std::vector<stats::TwinPair> out;
  std::size_t k = 0;
  for (const auto& [pid, members] : pairs) {
    out.push_back({phen[k], phen[k + 1], members[0].zygosity});
    k += 2;
  }
  return out;
}

void write_fit(std::ostream& out, const char* adjustment, const char* fit_label, const stats::AceFit& f) {
  out << adjustment << ',' << fit_label << ',' << stats::to_string(f.model) << ',' << format_number(f.a2) << ','
      << format_number(f.c2) << ',' << format_number(f.e2) << ',' << format_number(f.mean) << ','
      << format_number(f.log_likelihood) << ',' << format_number(f.aic) << ','
      << (f.h2 ? format_number(*f.h2) : "NA") << ',' << (f.h2_se ? format_number(*f.h2_se) : "NA") << ','
      << (f.boundary ? 1 : 0) << ',' << f.n_mz << ',' << f.n_dz << '\n';
}

}  // namespace

void cmd_heritability(const HeritabilityOptions& options, std::ostream& out) {
  const auto records = cohort::read_predictions(options.predictions);
  const auto manifest = cohort::read_manifest(options.manifest);
  stats::FitOptions fo;
  fo.seed = options.seed;
  fo.bootstrap_resamples = options.bootstrap;
  emit(options.out, out, [&](std::ostream& o) {
    o << "adjustment,fit,model,a2,c2,e2,mean,log_likelihood,aic,h2,h2_se,boundary,n_mz,n_dz\n";
    for (bool corrected : {false, true}) {
      const auto pairs = twin_pairs(records, manifest, corrected);
      const auto fits = stats::fit_nested(pairs, fo);
      const char* adj = corrected ? "age_corrected" : "unadjusted";
      write_fit(o, adj, "selected", stats::select_model_aic(fits));
      write_fit(o, adj, "ace", fits.ace);
      write_fit(o, adj, "ae", fits.ae);
      write_fit(o, adj, "e", fits.e);
    }
  });
}

void cmd_reliability(const ReliabilityOptions& options, std::ostream& out) {
  const auto records = cohort::read_predictions(options.predictions);
  std::vector<stats::PredictionRecord> a, b;
  std::string label;
  if (options.predictions_b) {
    a = records;
    b = cohort::read_predictions(*options.predictions_b);
    label = "files";
  } else {
    if (!options.manifest) throw ValidationError("reliability: --manifest is required without --predictions-b");
    const auto manifest = cohort::read_manifest(*options.manifest);
    std::map<std::pair<std::string, int>, std::string> site_of;
    for (const auto& r : manifest.rows) site_of[{r.subject_id, r.session}] = r.site;
    // subject -> site -> session -> record
    std::map<std::string, std::map<std::string, std::map<int, const stats::PredictionRecord*>>> grid;
    for (const auto& r : records) {
      if (!r.session) throw ValidationError("reliability: prediction for " + r.subject_id + " has no session");
      const auto it = site_of.find({r.subject_id, *r.session});
      if (it == site_of.end()) {
        throw ValidationError("reliability: " + r.subject_id + " session " + std::to_string(*r.session) + " is not in the manifest");
      }
      grid[r.subject_id][it->second][*r.session] = &r;
    }
    for (const auto& [id, sites] : grid) {
      if (options.pairing == Pairing::kWithin) {
        for (const auto& [site, sessions] : sites) {
          if (sessions.size() < 2) continue;
          auto it = sessions.begin();
          a.push_back(*it->second);
          b.push_back(*std::next(it)->second);
          break;
        }
      } else if (sites.size() >= 2) {
        auto it = sites.begin();
        a.push_back(*it->second.begin()->second);
        b.push_back(*std::next(it)->second.begin()->second);
      }
    }
    label = options.pairing == Pairing::kWithin ? "within" : "between";
  }
  const auto r = stats::reliability_report(a, b);
  emit(options.out, out, [&](std::ostream& o) {
    o << "pairing,icc,ci_low,ci_high,n_targets,n_raters,bms,jms,ems\n"
      << label << ',' << na_or(r.icc) << ',' << na_or(r.ci_low) << ',' << na_or(r.ci_high) << ',' << r.n_targets << ','
      << r.n_raters << ',' << format_number(r.bms) << ',' << format_number(r.jms) << ',' << format_number(r.ems) << '\n';
  });
}

void cmd_phantom(const PhantomOptions& o, std::ostream& log) {
  if (o.out.empty()) throw ValidationError("phantom: --out is required");
  phantom::PhantomParams params;
  params.seed = o.seed;
  params.dims = {o.dims, o.dims, o.dims};
  // Brain radii scale with the grid so that any cube size keeps the same shape.
  const double scale = static_cast<double>(o.dims) / 32.0;
  for (auto& r : params.brain_radii) r *= scale;
  params.ventricle_base_radius *= scale;
  params.ventricle_growth_per_year *= scale;
  params.validate();

  std::vector<phantom::PhantomSubject> subjects;
  if (o.twins) {
    phantom::TwinSimParams tp;
    tp.n_mz = o.n_mz;
    tp.n_dz = o.n_dz;
    tp.a2 = o.a2;
    tp.c2 = o.c2;
    tp.e2 = o.e2;
    tp.age_min = o.age_min;
    tp.age_max = o.age_max;
    tp.offset_sd = o.offset_sd;
    tp.seed = o.seed;
    subjects = phantom::generate_twin_cohort(tp, params, true, o.tissues).subjects;
  } else {
    phantom::CohortOptions co;
    co.age_min = o.age_min;
    co.age_max = o.age_max;
    co.tissues = o.tissues;
    subjects = phantom::generate_cohort(o.n, params, co);
  }

  const fs::path vol_dir = o.out / "volumes";
  ensure_dir(vol_dir);
  cohort::Manifest manifest;
  auto write_session = [&](const phantom::PhantomSubject& s, const phantom::PhantomVolumes& v, int session,
                           const std::string& site) {
    const std::string stem = s.id + (session == 1 ? "" : "_ses-" + std::to_string(session));
    const fs::path raw = fs::path("volumes") / (stem + ".nii");
    write_nifti(v.raw, o.out / raw);
    if (o.tissues) {
      write_nifti(v.gm, o.out / tissue_path(raw, "gm"));
      write_nifti(v.wm, o.out / tissue_path(raw, "wm"));
    }
    cohort::ManifestRow row;
    row.subject_id = s.id;
    row.volume_path = raw.generic_string();
    row.age_years = s.age;
    row.site = site;
    row.session = session;
    row.pair_id = s.pair_id;
    row.zygosity = s.zygosity;
    manifest.rows.push_back(std::move(row));
  };
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    write_session(s, s.volumes, 1, "A");
    for (std::size_t k = 0; k < o.rescans; ++k) {
      write_session(s, phantom::rescan(s, params, derive_seed(derive_seed(o.seed, 0x5E5 + k), i), o.tissues),
                    static_cast<int>(k + 2), "A");
    }
    if (o.second_scanner) {
      phantom::ScannerEffect fx{o.gain, o.bias_amplitude, o.extra_noise, derive_seed(o.seed, 0x5CA)};
      auto v = phantom::rescan(s, params, derive_seed(derive_seed(o.seed, 0x5CB), i), o.tissues);
      v.raw = phantom::apply_scanner_effect(v.raw, fx);
      if (o.tissues) {
        v.gm = phantom::apply_scanner_effect(v.gm, fx);
        v.wm = phantom::apply_scanner_effect(v.wm, fx);
      }
      write_session(s, v, static_cast<int>(o.rescans + 2), "B");
    }
  }
  cohort::write_manifest(manifest, o.out / "manifest.csv");
  log << "wrote " << subjects.size() << " subjects (" << manifest.rows.size() << " sessions) to " << o.out.string() << '\n';
}

bool cmd_gradcheck(const GradcheckOptions& options, std::ostream& out) {
  const auto reports = nn::run_gradient_suite(options.seed);
  bool ok = true;
  emit(options.out, out, [&](std::ostream& o) {
    o << "layer,max_rel_error,tolerance,status\n";
    for (const auto& r : reports) {
      o << r.label << ',' << format_number(r.max_rel_error) << ',' << format_number(r.tolerance) << ','
        << (r.passed ? "pass" : "fail") << '\n';
      ok = ok && r.passed;
    }
  });
  return ok;
}

}  // namespace brainage::cli
