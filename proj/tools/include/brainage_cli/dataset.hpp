#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "brainage/cohort.hpp"
#include "brainage/gpr.hpp"
#include "brainage/training.hpp"
#include "brainage_cli/config.hpp"

namespace brainage::cli {

/// Tissue maps live next to the raw volume: sub-001.nii -> sub-001_gm.nii.
std::filesystem::path tissue_path(const std::filesystem::path& raw, const char* tissue);

/// Files feeding one subject for the given input kind (gm+wm yields two).
std::vector<std::filesystem::path> input_paths(const cohort::ManifestRow& row, InputKind kind,
                                               const std::filesystem::path& manifest_dir);

model::Subject load_subject(const cohort::ManifestRow& row, InputKind kind, const std::filesystem::path& manifest_dir);

/// Rows of the lowest session per subject, in manifest order.
std::vector<const cohort::ManifestRow*> first_sessions(const cohort::Manifest& manifest);

/// One row per subject, all volumes concatenated.
gpr::FeatureMatrix feature_matrix(std::span<const model::Subject> subjects);

/// GPR with a linear kernel collapses to a weight vector over voxels:
/// prediction = w . x + target_mean with w = s / F * X_train^T alpha.
struct LinearGprModel {
  InputKind input_kind = InputKind::kRaw;
  Extent3 dims{0, 0, 0};
  std::size_t volumes_per_subject = 1;
  gpr::Hyperparameters hyper;
  double target_mean = 0.0;
  double log_marginal_likelihood = 0.0;
  Eigen::VectorXd weights;

  std::vector<double> predict(std::span<const model::Subject> subjects) const;
};

LinearGprModel to_linear_model(const gpr::GprModel& model, const gpr::FeatureMatrix& x_train, InputKind kind,
                               const Extent3& dims, std::size_t volumes_per_subject);

/// "BAGP", u32 version, u64 JSON length, JSON metadata, little-endian f64 weights.
void save_gpr_model(const LinearGprModel& model, const std::filesystem::path& path);
LinearGprModel load_gpr_model(const std::filesystem::path& path);

/// True when the file starts with the CNN checkpoint magic.
bool is_cnn_checkpoint(const std::filesystem::path& path);

}  // namespace brainage::cli
