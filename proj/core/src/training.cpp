#include "brainage/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "brainage/error.hpp"
#include "brainage/optimizer.hpp"

namespace brainage::model {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be finite and >= 0");
  }
  if (!(lr_decay_per_epoch >= 0.0 && lr_decay_per_epoch < 1.0)) {
    throw ValidationError("lr_decay_per_epoch must lie in [0, 1)");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (restarts == 0) throw ValidationError("restarts must be positive");
  if (max_shift_voxels < 0) throw ValidationError("max_shift_voxels must be >= 0");
  if (!(max_rotation_degrees >= 0.0)) throw ValidationError("max_rotation_degrees must be >= 0");
}

double lr_at_epoch(const TrainConfig& config, std::size_t epoch) {
  return config.learning_rate * std::pow(1.0 - config.lr_decay_per_epoch, static_cast<double>(epoch));
}

RigidTransform sample_augmentation(Rng& rng, const TrainConfig& config, const Spacing3& voxel_size) {
  std::uniform_int_distribution<int> shift(-config.max_shift_voxels, config.max_shift_voxels);
  std::uniform_real_distribution<double> angle(-config.max_rotation_degrees, config.max_rotation_degrees);
  const int sz = shift(rng), sh = shift(rng), sw = shift(rng);
  RigidTransform t;
  t.translation = {sw * static_cast<double>(voxel_size[2]), sh * static_cast<double>(voxel_size[1]),
                   sz * static_cast<double>(voxel_size[0])};
  if (config.max_rotation_degrees > 0.0) {
    t.rotation.z_deg = angle(rng);
    t.rotation.y_deg = angle(rng);
    t.rotation.x_deg = angle(rng);
  }
  return t;
}

Volume3D apply_augmentation(const Volume3D& volume, const RigidTransform& transform, Interpolation interpolation) {
  // Perturb about the volume's own center, independent of where it sits.
  Volume3D centered = volume;
  centered.set_origin_offset({0, 0, 0});
  Volume3D out = resample(centered, transform, TargetGrid::of(volume), interpolation);
  out.set_origin_offset(volume.origin_offset());
  return out;
}

Volume3D augment(const Volume3D& volume, Rng& rng, const TrainConfig& config) {
  return apply_augmentation(volume, sample_augmentation(rng, config, volume.voxel_size()),
                            config.augment_interpolation);
}

std::vector<nn::Tensor<float>> make_batch(const ArchitectureSpec& spec, std::span<const Subject* const> subjects) {
  const std::size_t n = subjects.size();
  const std::size_t per_volume = voxel_count(spec.input_dims);
  const std::size_t C = spec.input_channels;
  std::vector<nn::Tensor<float>> batches;
  batches.reserve(spec.branches);
  for (std::size_t b = 0; b < spec.branches; ++b) {
    batches.emplace_back(nn::Shape{n, C, spec.input_dims[0], spec.input_dims[1], spec.input_dims[2]});
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Subject& s = *subjects[i];
    if (s.volumes.size() != spec.branches * C) {
      throw ShapeError("subject " + s.id + " provides " + std::to_string(s.volumes.size()) + " volumes, model needs " +
                       std::to_string(spec.branches * C));
    }
    for (std::size_t b = 0; b < spec.branches; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        const Volume3D& v = s.volumes[b * C + c];
        if (v.dims() != spec.input_dims) {
          throw ShapeError("subject " + s.id + " volume dims do not match the architecture input dims");
        }
        float* dst = batches[b].data() + (i * C + c) * per_volume;
        const auto src = v.data();
        if (!spec.zscore_input) {
          std::copy(src.begin(), src.end(), dst);
          continue;
        }
        double sum = 0.0, sq = 0.0;
        for (float x : src) sum += x;
        const double mean = sum / static_cast<double>(per_volume);
        for (float x : src) sq += (x - mean) * (x - mean);
        const double sd = std::sqrt(sq / static_cast<double>(per_volume));
        const double inv = sd > 0.0 ? 1.0 / sd : 1.0;
        for (std::size_t k = 0; k < per_volume; ++k) dst[k] = static_cast<float>((src[k] - mean) * inv);
      }
    }
  }
  return batches;
}

std::vector<double> predict(Network<float>& model, std::span<const Subject> subjects, std::size_t batch_size) {
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  std::vector<double> out;
  out.reserve(subjects.size());
  std::vector<const Subject*> ptrs;
  for (std::size_t start = 0; start < subjects.size(); start += batch_size) {
    const std::size_t end = std::min(subjects.size(), start + batch_size);
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&subjects[i]);
    const auto batch = make_batch(model.spec(), ptrs);
    const nn::Tensor<float> y = model.forward(batch, nn::Mode::kEval);
    for (std::size_t i = 0; i < y.size(); ++i) out.push_back(y[i]);
  }
  for (std::size_t b = 0; b < model.branch_count(); ++b) model.branch(b).clear_activations();
  return out;
}

double evaluate_mae(Network<float>& model, std::span<const Subject> subjects, std::size_t batch_size) {
  const auto pred = predict(model, subjects, batch_size);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - subjects[i].age);
  return sum / static_cast<double>(pred.size());
}

namespace {

struct RunOutcome {
  Network<float> best;
  TrainMetadata metadata;
  TrainHistory history;
};

RunOutcome run_once(Network<float> net, std::span<const Subject> train_set, std::span<const Subject> val_set,
                    const TrainConfig& config, std::size_t restart, std::uint64_t seed, TrainObserver* observer) {
  Rng rng(derive_seed(seed, 0xDA7A));
  nn::SgdMomentum<float> optimizer({config.learning_rate, config.momentum, config.weight_decay});

  RunOutcome outcome{net, {}, {}};
  outcome.metadata.seed = seed;
  outcome.metadata.restart = restart;
  outcome.metadata.best_val_mae = evaluate_mae(net, val_set, config.batch_size);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Subject> augmented;
  std::vector<const Subject*> ptrs;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config, epoch);
    optimizer.set_learning_rate(lr);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      ptrs.clear();
      augmented.clear();
      if (config.augment) {
        augmented.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
          const Subject& s = train_set[order[i]];
          Subject a{s.id, {}, s.age};
          const RigidTransform t = sample_augmentation(rng, config, s.volumes.front().voxel_size());
          for (const auto& v : s.volumes) {
            if (observer) observer->on_augment(v);
            a.volumes.push_back(apply_augmentation(v, t, config.augment_interpolation));
          }
          augmented.push_back(std::move(a));
        }
        for (const auto& a : augmented) ptrs.push_back(&a);
      } else {
        for (std::size_t i = start; i < end; ++i) ptrs.push_back(&train_set[order[i]]);
      }

      const auto batch = make_batch(net.spec(), ptrs);
      nn::Tensor<float> target({ptrs.size(), 1});
      for (std::size_t i = 0; i < ptrs.size(); ++i) target[i] = static_cast<float>(ptrs[i]->age);

      const nn::Tensor<float> pred = net.forward(batch, nn::Mode::kTrain);
      const auto loss = nn::mae_loss(pred, target);
      if (!std::isfinite(loss.loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss (restart " << restart << ", epoch " << epoch << ", batch starting at "
            << start << ", lr " << lr << ")";
        throw NumericError(msg.str());
      }
      loss_sum += loss.loss * static_cast<double>(ptrs.size());
      net.zero_grad();
      net.backward(loss.grad);
      optimizer.step(net.parameters());
    }

    EpochRecord rec{epoch, lr, loss_sum / static_cast<double>(order.size()),
                    evaluate_mae(net, val_set, config.batch_size)};
    if (!std::isfinite(rec.val_mae)) {
      throw NumericError("non-finite validation MAE at restart " + std::to_string(restart) + ", epoch " +
                         std::to_string(epoch));
    }
    outcome.history.epochs.push_back(rec);
    if (observer) observer->on_epoch(restart, rec);
    if (outcome.metadata.best_epoch < 0 || rec.val_mae < outcome.metadata.best_val_mae) {
      outcome.metadata.best_val_mae = rec.val_mae;
      outcome.metadata.best_epoch = static_cast<long long>(epoch);
      outcome.best = net;
    }
  }
  outcome.metadata.epochs_run = config.epochs;
  return outcome;
}

}  // namespace

TrainResult train(Network<float> model, std::span<const Subject> train_set, std::span<const Subject> val_set,
                  const TrainConfig& config, TrainObserver* observer) {
  config.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");
  if (val_set.empty()) throw ValidationError("validation set is empty");

  TrainResult result{{model, {}}, {}, {}, {}};
  bool have_best = false;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    const std::uint64_t seed = derive_seed(config.seed, r);
    Network<float> start = model;
    if (r > 0) {
      if (start.spec().branches == 2) {
        start.initialize_head(seed);
      } else {
        start.initialize(seed);
      }
    }
    RunOutcome run = run_once(std::move(start), train_set, val_set, config, r, seed, observer);
    result.restart_best_val_mae.push_back(run.metadata.best_val_mae);
    result.restart_histories.push_back(run.history);
    if (!have_best || run.metadata.best_val_mae < result.checkpoint.metadata.best_val_mae) {
      have_best = true;
      result.checkpoint = Checkpoint{std::move(run.best), run.metadata};
      result.history = std::move(run.history);
    }
  }
  for (std::size_t b = 0; b < result.checkpoint.model.branch_count(); ++b) {
    result.checkpoint.model.branch(b).clear_activations();
  }
  return result;
}

}  // namespace brainage::model
