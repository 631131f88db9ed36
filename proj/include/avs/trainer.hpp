#pragma once

#include "avs/common.hpp"
#include "avs/data.hpp"
#include "avs/loss.hpp"
#include "avs/spaces.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace avs {

/// kMap: mean AP over validation captions. kRecallSum: R@1 + R@5 + R@10 in percent.
enum class ValMetric { kMap, kRecallSum };

std::string_view val_metric_name(ValMetric metric);
ValMetric parse_val_metric(std::string_view name);

struct TrainConfig {
  double alpha = kDefaultMargin;
  std::size_t batch_size = 128;
  double lr0 = 1e-4;
  double lr_decay = 0.99;
  std::size_t plateau_patience = 3;
  std::size_t early_stop_patience = 10;
  std::size_t restarts = 3;
  std::size_t space_dim = kDefaultSpaceDim;
  std::uint64_t seed = 0;
  ValMetric val_metric = ValMetric::kMap;
  FusionMode fusion = FusionMode::kSea;
  std::vector<EncoderKind> encoders = {EncoderKind::kBow, EncoderKind::kW2v, EncoderKind::kGru};
  LossMode loss = LossMode::kCombined;
  std::size_t max_epochs = 200;
  std::size_t gru_hidden = kGruHidden;
  std::size_t gru_input = kW2vDim;
  std::size_t transform_dim = kTransformDim;
  double rho = 0.99;
  double eps = 1e-8;
  std::size_t threads = 1;

  /// Throws UsageError unless every value is positive and in range.
  void validate() const;
};

/// Sets one field by its name. Throws UsageError on an unknown key or a bad value.
void apply_config_value(TrainConfig& config, std::string_view key, std::string_view value);

/// `key=value` lines; `#` starts a comment, blank lines are skipped.
std::vector<std::pair<std::string, std::string>> read_config_entries(std::istream& in);
std::vector<std::pair<std::string, std::string>> load_config_entries(const std::string& path);

/// Every field as `key=value`, in declaration order.
void write_config(std::ostream& out, const TrainConfig& config);

ModelConfig model_config(const TrainConfig& config, std::size_t video_dim);

/// Squared-gradient accumulators shaped like the parameters.
template <typename T>
struct OptimizerState {
  ModelParams<T> acc;
  double rho = 0.99;
  double eps = 1e-8;
  double lr = 1e-4;

  static OptimizerState like(const ModelParams<T>& params, double rho, double eps, double lr);
};

/// acc = rho*acc + (1-rho)*g^2; param -= lr*g/(sqrt(acc)+eps), elementwise.
/// Throws DataError on a size mismatch and NumericalError on a non-finite
/// gradient, before anything is modified.
template <typename T>
void rmsprop_step(std::span<T> param, std::span<const T> grad, std::span<T> acc, double rho,
                  double eps, double lr);

/// Whole-model step; every gradient is checked before any tensor moves.
template <typename T>
void rmsprop_step(ModelParams<T>& params, const ModelParams<T>& grad, OptimizerState<T>& state);

struct BatchRecord {
  std::size_t restart = 0;
  std::size_t epoch = 0;
  std::size_t batch = 0;
  float loss = 0.0f;
};

struct EpochRecord {
  std::size_t restart = 0;
  std::size_t epoch = 0;
  double loss = 0.0;  // mean batch loss
  double val_metric = 0.0;
  double lr = 0.0;    // after this epoch's decay and any halving
  DiversityStats diversity;
};

struct TrainLog {
  std::vector<BatchRecord> batches;
  std::vector<EpochRecord> epochs;
  std::vector<std::string> notes;  // aborted restarts and similar
  std::size_t best_restart = 0;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
};

/// `restart epoch loss val_metric lr`.
void write_epoch_line(std::ostream& out, const EpochRecord& record);
void write_log(std::ostream& out, const TrainLog& log);
/// One diversity line per logged epoch, in log order.
void write_diversity(std::ostream& out, const TrainLog& log);

struct TrainSet {
  const CaptionSet* captions = nullptr;
  const FeatureStore* features = nullptr;
};

struct FitResult {
  MultiSpaceModel<float> model;
  TrainLog log;
};

/// Validation metric of `model` ranking the set's captions against its own videos.
double validation_metric(const MultiSpaceModel<float>& model, const TrainSet& val, ValMetric metric,
                         std::size_t threads = 1);

/// Trains `restarts` seeded runs and returns the best-epoch model of the
/// best run. kModelAverage trains one single-encoder model per encoder and
/// assembles them; their restarts are numbered consecutively in the log.
/// Epoch lines are echoed to `progress` as they are produced.
FitResult fit(const TrainSet& train, const TrainSet& val, const TextResources& resources,
              const TrainConfig& config, std::ostream* progress = nullptr);

struct GradCheckOptions {
  double h = 1e-5;
  std::size_t samples_per_tensor = 32;
  double tolerance = 1e-4;
  double alpha = kDefaultMargin;
  LossMode loss = LossMode::kCombined;
  /// Denominator floor for relative errors of near-zero gradients.
  double floor = 1e-6;
  /// Batches whose argmax or hinge margins are closer than this are resampled.
  double kink_margin = 1e-3;
  std::size_t max_resamples = 50;
  /// Multiplies the analytic gradient; 1.1 injects a 10% fault.
  double analytic_scale = 1.0;
  std::uint64_t seed = 0;
};

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  double loss = 0.0;
  std::size_t resamples = 0;
  bool passed = false;
};

/// Supplies a fresh batch per attempt.
using BatchSampler = std::function<BatchData<double>(std::size_t attempt)>;

/// Central differences against the analytic gradient on a 64-bit model.
/// Throws NumericalError if no kink-free batch turns up within max_resamples.
GradCheckReport gradient_check(const MultiSpaceModel<double>& model, const BatchSampler& sampler,
                               const GradCheckOptions& options);

void write_gradcheck_report(std::ostream& out, const GradCheckReport& report);

}  // namespace avs
