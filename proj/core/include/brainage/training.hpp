#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "brainage/network.hpp"
#include "brainage/random.hpp"
#include "brainage/volume.hpp"

namespace brainage::model {

struct TrainConfig {
  double learning_rate = 0.01;
  double lr_decay_per_epoch = 0.03;
  double momentum = 0.9;
  double weight_decay = 0.00005;
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  bool augment = true;
  int max_shift_voxels = 10;
  double max_rotation_degrees = 40.0;
  std::size_t restarts = 3;
  std::uint64_t seed = 0;
  Interpolation augment_interpolation = Interpolation::kTrilinear;

  void validate() const;
};

/// One training / evaluation example: the input volumes for every branch and
/// channel (branch-major), and the chronological age in years.
struct Subject {
  std::string id;
  std::vector<Volume3D> volumes;
  double age = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_mae = 0.0;
  double val_mae = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainMetadata {
  /// Epoch (0-based) whose parameters were kept; -1 when no epoch ran.
  long long best_epoch = -1;
  double best_val_mae = 0.0;
  std::uint64_t seed = 0;
  std::size_t restart = 0;
  std::size_t epochs_run = 0;
};

struct Checkpoint {
  Network<float> model;
  TrainMetadata metadata;
};

struct TrainResult {
  Checkpoint checkpoint;
  /// History of the run that produced the returned checkpoint.
  TrainHistory history;
  /// Best validation MAE of every restart, in restart order.
  std::vector<double> restart_best_val_mae;
  std::vector<TrainHistory> restart_histories;
};

/// Optional hooks for progress reporting and instrumentation.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_augment(const Volume3D& /*input*/) {}
  virtual void on_epoch(std::size_t /*restart*/, const EpochRecord& /*record*/) {}
};

/// lr0 * (1 - decay)^epoch.
double lr_at_epoch(const TrainConfig& config, std::size_t epoch);

/// Draws one random rigid perturbation: integer shift per axis in
/// [-max_shift, max_shift] voxels and one angle per axis in
/// [-max_rotation, max_rotation] degrees.
RigidTransform sample_augmentation(Rng& rng, const TrainConfig& config, const Spacing3& voxel_size);

/// Resamples the volume through `transform` on its own grid (zero fill).
Volume3D apply_augmentation(const Volume3D& volume, const RigidTransform& transform, Interpolation interpolation);

Volume3D augment(const Volume3D& volume, Rng& rng, const TrainConfig& config);

/// Packs volumes into per-branch [N, C, D, H, W] batches.
std::vector<nn::Tensor<float>> make_batch(const ArchitectureSpec& spec, std::span<const Subject* const> subjects);

/// Trains the network with SGD + momentum on the MAE loss, keeping the
/// parameters with the lowest validation MAE. With restarts > 1, further runs
/// start from fresh seeds (fused networks re-draw only their head) and the
/// best-validation run is returned.
TrainResult train(Network<float> model, std::span<const Subject> train_set, std::span<const Subject> val_set,
                  const TrainConfig& config, TrainObserver* observer = nullptr);

/// Deterministic eval-mode predictions (years), one per subject.
std::vector<double> predict(Network<float>& model, std::span<const Subject> subjects, std::size_t batch_size = 8);

/// Mean absolute error of eval-mode predictions.
double evaluate_mae(Network<float>& model, std::span<const Subject> subjects, std::size_t batch_size = 8);

}  // namespace brainage::model
