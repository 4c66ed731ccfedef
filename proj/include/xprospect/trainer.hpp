#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xprospect/dataset.hpp"
#include "xprospect/optim.hpp"
#include "xprospect/reconnet.hpp"

namespace xprospect {

enum class LossKind { MSE, MAE };

std::string to_string(LossKind k);
std::string to_string(OptimizerKind k);
LossKind parse_loss(const std::string& s);
OptimizerKind parse_optimizer(const std::string& s);

/// Mean squared voxel error. Dims must match.
double mse(const Volume3D& pred, const Volume3D& label);
/// Mean absolute voxel error. Dims must match.
double mae(const Volume3D& pred, const Volume3D& label);

struct TrainConfig {
  LossKind loss = LossKind::MAE;
  std::size_t epochs = 1;  // 0 runs no steps and returns the initial weights
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  /// Write a checkpoint every N optimizer steps (0: final checkpoint only).
  std::size_t checkpoint_every = 0;
  bool use_ema = false;
  EmaConfig ema;
  /// Start the output bias at logit(mean label) instead of zero.
  bool prior_head_bias = false;

  void validate() const;
};

struct TrainingSample {
  std::string id;
  Image2D frontal;
  Image2D lateral;
  Volume3D label;
};

/// One row of the metrics log.
struct StepRecord {
  std::uint64_t step;
  std::size_t epoch;
  LossKind loss;
  double value;
  std::int64_t wall_ms;
};

struct TrainResult {
  ParamStore params;
  OptimizerState optimizer;
  std::optional<EmaState> ema;
  std::vector<StepRecord> log;
};

/// Optional side effects of a run.
struct TrainHooks {
  /// Called with (step, params, ema) at every checkpoint_every boundary.
  std::function<void(std::uint64_t, const ParamStore&, const EmaState*)> on_checkpoint;
  /// Called after each optimizer step.
  std::function<void(const StepRecord&)> on_step;
  /// Record elapsed wall time in the log. Off keeps logs byte-reproducible.
  bool wall_clock = false;
};

/// Gradient of the configured loss for one sample, keyed like the params.
ParamStore loss_gradients(const ParamStore& params, const ModelConfig& cfg, LossKind loss,
                          const TrainingSample& sample, double* loss_value = nullptr);

/// Epochs over the samples in a seed-determined order. Each optimizer step
/// averages gradients over `batch_size` samples. With use_ema the shadow
/// is updated after every step and copied into the weights every
/// reset_interval steps. Throws NonFiniteError naming the step on a bad loss.
TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const OptimizerConfig& opt,
                  const std::vector<TrainingSample>& samples, const TrainHooks& hooks = {});

/// Loads the train-split rows of a manifest; missing or ill-formed files are
/// reported together, one line per row.
std::vector<TrainingSample> load_samples(const DatasetManifest& manifest, Split split);

/// TSV metrics log: step, epoch, loss_name, loss_value, wall_ms.
std::string encode_log(const std::vector<StepRecord>& log);
std::string log_header();
std::string log_line(const StepRecord& r);

struct TensorCheck {
  std::string name;
  std::size_t sampled = 0;
  double max_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double tolerance = 0.0;
  bool passed() const;
};

struct GradCheckOptions {
  std::size_t samples_per_tensor = 32;
  double step = 1e-3;
  LossKind loss = LossKind::MSE;
  std::uint64_t seed = 0;
};

double relative_error(double analytic, double numeric);

/// Central differences of `loss` around `params` checked against `analytic`
/// on a seeded subset of coordinates per tensor.
GradCheckReport fd_check(const ParamStore& params, const ParamStore& analytic,
                         const std::function<double(const ParamStore&)>& loss, double tolerance,
                         const GradCheckOptions& opts = {});

/// Compares reverse-mode gradients of the loss against central differences
/// |a - f| / max(1, |a| + |f|) on a random subset of coordinates per tensor.
GradCheckReport grad_check(const ParamStore& params, const ModelConfig& cfg, const TrainingSample& sample,
                           double tolerance, const GradCheckOptions& opts = {});

/// Same, on freshly initialized weights and a phantom sample of size cfg.input_size.
GradCheckReport grad_check(const ModelConfig& cfg, double tolerance, const GradCheckOptions& opts = {});

/// Projections of a phantom paired with the phantom itself.
TrainingSample phantom_sample(std::uint64_t seed, std::size_t size);

}  // namespace xprospect
