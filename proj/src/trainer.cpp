#include "avs/trainer.hpp"

#include "avs/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace avs {

std::string_view val_metric_name(ValMetric metric) {
  return metric == ValMetric::kMap ? "map" : "recall_sum";
}

ValMetric parse_val_metric(std::string_view name) {
  if (name == "map" || name == "mAP") return ValMetric::kMap;
  if (name == "recall_sum" || name == "rsum") return ValMetric::kRecallSum;
  throw UsageError("unknown validation metric '" + std::string(name) + "' (map | recall_sum)");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("invalid configuration: ") + what);
  };
  require(alpha > 0 && std::isfinite(alpha), "alpha must be positive");
  require(batch_size >= 2, "batch_size must be at least 2");
  require(lr0 > 0 && std::isfinite(lr0), "lr0 must be positive");
  require(lr_decay > 0 && lr_decay <= 1, "lr_decay must be in (0, 1]");
  require(plateau_patience >= 1, "plateau_patience must be at least 1");
  require(early_stop_patience >= 1, "early_stop_patience must be at least 1");
  require(restarts >= 1, "restarts must be at least 1");
  require(space_dim >= 1, "space_dim must be positive");
  require(max_epochs >= 1, "max_epochs must be positive");
  require(gru_hidden >= 1 && gru_input >= 1, "GRU sizes must be positive");
  require(transform_dim >= 1, "transform_dim must be positive");
  require(rho > 0 && rho < 1, "rho must be in (0, 1)");
  require(eps > 0, "eps must be positive");
  require(threads >= 1, "threads must be at least 1");
  require(!encoders.empty(), "at least one encoder is required");
}

namespace {

template <typename Number>
Number parse_number(std::string_view key, std::string_view text) {
  Number value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw UsageError("bad value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

}  // namespace

void apply_config_value(TrainConfig& c, std::string_view key, std::string_view value) {
  auto size = [&] { return parse_number<std::size_t>(key, value); };
  auto real = [&] { return parse_number<double>(key, value); };
  if (key == "alpha") c.alpha = real();
  else if (key == "batch_size") c.batch_size = size();
  else if (key == "lr0") c.lr0 = real();
  else if (key == "lr_decay") c.lr_decay = real();
  else if (key == "plateau_patience") c.plateau_patience = size();
  else if (key == "early_stop_patience") c.early_stop_patience = size();
  else if (key == "restarts") c.restarts = size();
  else if (key == "space_dim") c.space_dim = size();
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "val_metric") c.val_metric = parse_val_metric(value);
  else if (key == "fusion") c.fusion = parse_fusion(value);
  else if (key == "encoders") c.encoders = parse_encoder_list(value);
  else if (key == "loss") c.loss = parse_loss(value);
  else if (key == "max_epochs") c.max_epochs = size();
  else if (key == "gru_hidden") c.gru_hidden = size();
  else if (key == "gru_input") c.gru_input = size();
  else if (key == "transform_dim") c.transform_dim = size();
  else if (key == "rho") c.rho = real();
  else if (key == "eps") c.eps = real();
  else if (key == "threads") c.threads = size();
  else throw UsageError("unknown configuration key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> read_config_entries(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + " is not key=value");
    }
    out.emplace_back(trim(std::string_view(text).substr(0, eq)),
                     trim(std::string_view(text).substr(eq + 1)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> load_config_entries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  return read_config_entries(in);
}

void write_config(std::ostream& out, const TrainConfig& c) {
  out << "alpha=" << format_double(c.alpha) << '\n'
      << "batch_size=" << c.batch_size << '\n'
      << "lr0=" << format_double(c.lr0) << '\n'
      << "lr_decay=" << format_double(c.lr_decay) << '\n'
      << "plateau_patience=" << c.plateau_patience << '\n'
      << "early_stop_patience=" << c.early_stop_patience << '\n'
      << "restarts=" << c.restarts << '\n'
      << "space_dim=" << c.space_dim << '\n'
      << "seed=" << c.seed << '\n'
      << "val_metric=" << val_metric_name(c.val_metric) << '\n'
      << "fusion=" << fusion_name(c.fusion) << '\n'
      << "encoders=" << join_encoders(c.encoders) << '\n'
      << "loss=" << loss_name(c.loss) << '\n'
      << "max_epochs=" << c.max_epochs << '\n'
      << "gru_hidden=" << c.gru_hidden << '\n'
      << "gru_input=" << c.gru_input << '\n'
      << "transform_dim=" << c.transform_dim << '\n'
      << "rho=" << format_double(c.rho) << '\n'
      << "eps=" << format_double(c.eps) << '\n'
      << "threads=" << c.threads << '\n';
}

ModelConfig model_config(const TrainConfig& c, std::size_t video_dim) {
  ModelConfig m;
  m.fusion = c.fusion;
  m.encoders = c.encoders;
  m.video_dim = video_dim;
  m.space_dim = c.space_dim;
  m.gru_hidden = c.gru_hidden;
  m.gru_input = c.gru_input;
  m.transform_dim = c.transform_dim;
  return m;
}

template <typename T>
OptimizerState<T> OptimizerState<T>::like(const ModelParams<T>& params, double rho, double eps,
                                          double lr) {
  return {params.zeros_like(), rho, eps, lr};
}

namespace {

template <typename T>
bool all_finite(std::span<const T> values) {
  for (const T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
void rmsprop_apply(std::span<T> param, std::span<const T> grad, std::span<T> acc, double rho,
                   double eps, double lr) {
  const T r = static_cast<T>(rho);
  const T one_minus_r = static_cast<T>(1.0 - rho);
  const T e = static_cast<T>(eps);
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    acc[i] = r * acc[i] + one_minus_r * g * g;
    param[i] -= step * g / (std::sqrt(acc[i]) + e);
  }
}

template <typename T, typename Params>
auto tensor_spans(Params& p) {
  using Elem = std::conditional_t<std::is_const_v<Params>, const T, T>;
  std::vector<std::span<Elem>> out;
  p.for_each_tensor([&](const std::string&, auto& t) {
    out.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  });
  return out;
}

}  // namespace

template <typename T>
void rmsprop_step(std::span<T> param, std::span<const T> grad, std::span<T> acc, double rho,
                  double eps, double lr) {
  if (param.size() != grad.size() || param.size() != acc.size()) {
    throw DataError("parameter, gradient and accumulator sizes differ");
  }
  if (!all_finite(grad)) throw NumericalError("non-finite gradient; optimizer step aborted");
  rmsprop_apply(param, grad, acc, rho, eps, lr);
}

template <typename T>
void rmsprop_step(ModelParams<T>& params, const ModelParams<T>& grad, OptimizerState<T>& state) {
  auto p = tensor_spans<T>(params);
  const auto g = tensor_spans<T>(grad);
  auto a = tensor_spans<T>(state.acc);
  if (p.size() != g.size() || p.size() != a.size()) {
    throw DataError("parameter, gradient and accumulator layouts differ");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].size() != g[i].size() || p[i].size() != a[i].size()) {
      throw DataError("parameter, gradient and accumulator sizes differ");
    }
    if (!all_finite(g[i])) throw NumericalError("non-finite gradient; optimizer step aborted");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    rmsprop_apply(p[i], g[i], a[i], state.rho, state.eps, state.lr);
  }
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void rmsprop_step<float>(std::span<float>, std::span<const float>, std::span<float>,
                                  double, double, double);
template void rmsprop_step<double>(std::span<double>, std::span<const double>, std::span<double>,
                                   double, double, double);
template void rmsprop_step<float>(ModelParams<float>&, const ModelParams<float>&,
                                  OptimizerState<float>&);
template void rmsprop_step<double>(ModelParams<double>&, const ModelParams<double>&,
                                   OptimizerState<double>&);

void write_epoch_line(std::ostream& out, const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu %zu %.9g %.9g %.9g\n", r.restart, r.epoch, r.loss,
                r.val_metric, r.lr);
  out << buf;
}

void write_log(std::ostream& out, const TrainLog& log) {
  for (const auto& r : log.epochs) write_epoch_line(out, r);
}

void write_diversity(std::ostream& out, const TrainLog& log) {
  for (const auto& r : log.epochs) write_diversity_line(out, r.epoch, r.diversity);
}

namespace {

struct Validation {
  FeatureStore collection;
  std::vector<Sentence> queries;
  Qrels qrels;

  explicit Validation(const TrainSet& val)
      : collection(select_videos(*val.features, val.captions->video_ids())),
        queries(val.captions->sentences()),
        qrels(val.captions->qrels()) {}

  double score(const MultiSpaceModel<float>& model, ValMetric metric, std::size_t threads) const {
    const auto runs = rank_queries(std::span(&model, 1), collection, queries, 0, threads);
    const auto summary = evaluate(runs, qrels);
    return metric == ValMetric::kMap ? summary.map : summary.r1 + summary.r5 + summary.r10;
  }
};

void check_set(const TrainSet& set, const char* what) {
  if (!set.captions || !set.features) throw UsageError(std::string(what) + " set is incomplete");
  if (set.captions->size() == 0) throw DataError(std::string(what) + " set has no captions");
  set.captions->check_against(*set.features);
}

struct RestartOutcome {
  bool ok = false;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  ModelParams<float> best_params;
};

RestartOutcome run_restart(const TrainSet& train, const Validation& val,
                           MultiSpaceModel<float> model, const TrainConfig& config,
                           std::size_t restart, std::uint64_t batch_seed, TrainLog& log,
                           std::ostream* progress) {
  RestartOutcome out;
  auto state = OptimizerState<float>::like(model.params, config.rho, config.eps, config.lr0);
  const auto alpha = static_cast<float>(config.alpha);
  std::size_t since_best = 0;
  std::size_t plateau = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto batches = make_batches(*train.captions, config.batch_size, batch_seed, epoch);
    std::vector<LossReport> reports;
    reports.reserve(batches.size());
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto data = resolve_batch<float>(batches[b], *train.captions, *train.features);
      auto step = loss_and_gradient(data, model, alpha, config.loss);
      rmsprop_step(model.params, step.grad, state);
      log.batches.push_back({restart, epoch, b, step.loss.value});
      loss_sum += static_cast<double>(step.loss.value);
      reports.push_back(std::move(step.loss.report));
    }

    const double metric = val.score(model, config.val_metric, config.threads);
    if (!std::isfinite(metric)) {
      log.notes.push_back("restart " + std::to_string(restart) + " aborted at epoch " +
                          std::to_string(epoch) + ": validation metric is not finite");
      warn(log.notes.back());
      out.ok = false;
      return out;
    }

    state.lr *= config.lr_decay;
    if (metric > out.best_metric) {
      out.best_metric = metric;
      out.best_epoch = epoch;
      out.best_params = model.params;
      out.ok = true;
      since_best = 0;
      plateau = 0;
    } else {
      ++since_best;
      if (++plateau >= config.plateau_patience) {
        state.lr *= 0.5;
        plateau = 0;
      }
    }

    EpochRecord record{restart, epoch, loss_sum / static_cast<double>(batches.size()), metric,
                       state.lr, hardneg_diversity(reports)};
    log.epochs.push_back(record);
    if (progress) write_epoch_line(*progress, record);
    if (since_best >= config.early_stop_patience) break;
  }
  return out;
}

struct SelectedModel {
  MultiSpaceModel<float> model;
  double metric;
  std::size_t restart;
  std::size_t epoch;
};

SelectedModel fit_restarts(const TrainSet& train, const Validation& val,
                           const TextResources& resources, const TrainConfig& config,
                           std::size_t first_restart, TrainLog& log, std::ostream* progress) {
  const auto mc = model_config(config, train.features->dim());
  std::optional<SelectedModel> best;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    const std::size_t g = first_restart + r;
    Rng init(mix_seed(config.seed, 2 * g + 1));
    auto model = MultiSpaceModel<float>::create(mc, resources, init);
    auto outcome = run_restart(train, val, model, config, g, mix_seed(config.seed, 2 * g), log,
                               progress);
    if (!outcome.ok) continue;
    if (!best || outcome.best_metric > best->metric) {
      model.params = std::move(outcome.best_params);
      best = SelectedModel{std::move(model), outcome.best_metric, g, outcome.best_epoch};
    }
  }
  if (!best) throw NumericalError("every training restart was aborted");
  return std::move(*best);
}

}  // namespace

double validation_metric(const MultiSpaceModel<float>& model, const TrainSet& val, ValMetric metric,
                         std::size_t threads) {
  check_set(val, "validation");
  return Validation(val).score(model, metric, threads);
}

FitResult fit(const TrainSet& train, const TrainSet& val, const TextResources& resources,
              const TrainConfig& config, std::ostream* progress) {
  config.validate();
  check_set(train, "training");
  check_set(val, "validation");
  if (val.features->dim() != train.features->dim()) {
    throw DataError("training and validation features differ in dimension");
  }
  const Validation validation(val);
  TrainLog log;

  if (config.fusion != FusionMode::kModelAverage) {
    auto best = fit_restarts(train, validation, resources, config, 0, log, progress);
    log.best_restart = best.restart;
    log.best_epoch = best.epoch;
    log.best_metric = best.metric;
    return {std::move(best.model), std::move(log)};
  }

  std::vector<MultiSpaceModel<float>> parts;
  for (std::size_t e = 0; e < config.encoders.size(); ++e) {
    TrainConfig single = config;
    single.fusion = FusionMode::kSea;
    single.encoders = {config.encoders[e]};
    auto best = fit_restarts(train, validation, resources, single, e * config.restarts, log,
                             progress);
    parts.push_back(std::move(best.model));
  }
  auto model = assemble_average(parts);
  log.best_metric = validation.score(model, config.val_metric, config.threads);
  log.notes.push_back("averaged model validation metric " + format_double(log.best_metric));
  return {std::move(model), std::move(log)};
}

GradCheckReport gradient_check(const MultiSpaceModel<double>& model, const BatchSampler& sampler,
                               const GradCheckOptions& options) {
  GradCheckReport report;
  std::optional<BatchData<double>> batch;
  std::optional<LossAndGradient<double>> analytic;
  for (std::size_t attempt = 0; attempt <= options.max_resamples; ++attempt) {
    auto candidate = sampler(attempt);
    auto lg = loss_and_gradient(candidate, model, options.alpha, options.loss);
    if (lg.loss.min_tie_gap < options.kink_margin || lg.loss.min_hinge_gap < options.kink_margin) {
      ++report.resamples;
      continue;
    }
    batch = std::move(candidate);
    analytic = std::move(lg);
    break;
  }
  if (!batch) {
    throw NumericalError("no batch without near-ties found after " +
                         std::to_string(options.max_resamples) + " resamples");
  }
  report.loss = analytic->loss.value;

  auto probe = model;
  auto loss_at = [&] {
    return options.loss == LossMode::kCombined ? combined_loss(*batch, probe, options.alpha).value
                                               : single_loss(*batch, probe, options.alpha).value;
  };
  std::vector<std::string> names;
  probe.params.for_each_tensor([&](const std::string& name, const auto&) { names.push_back(name); });
  auto values = tensor_spans<double>(probe.params);
  const auto grads = tensor_spans<double>(std::as_const(analytic->grad));

  for (std::size_t t = 0; t < values.size(); ++t) {
    auto x = values[t];
    const auto g = grads[t];
    std::vector<std::size_t> nonzero, zero;
    for (std::size_t i = 0; i < g.size(); ++i) (g[i] != 0.0 ? nonzero : zero).push_back(i);
    Rng rng(mix_seed(options.seed, t));
    rng.shuffle(std::span(nonzero));
    rng.shuffle(std::span(zero));
    nonzero.insert(nonzero.end(), zero.begin(), zero.end());
    nonzero.resize(std::min(nonzero.size(), options.samples_per_tensor));

    TensorCheck check{names[t], nonzero.size(), 0.0};
    for (const auto i : nonzero) {
      const double saved = x[i];
      x[i] = saved + options.h;
      const double up = loss_at();
      x[i] = saved - options.h;
      const double down = loss_at();
      x[i] = saved;
      const double numeric = (up - down) / (2.0 * options.h);
      const double a = g[i] * options.analytic_scale;
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      check.max_rel_error = std::max(check.max_rel_error, std::abs(a - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.tensors.push_back(std::move(check));
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

void write_gradcheck_report(std::ostream& out, const GradCheckReport& report) {
  char buf[256];
  for (const auto& t : report.tensors) {
    std::snprintf(buf, sizeof buf, "tensor=%s checked=%zu max_rel_error=%.3e\n", t.name.c_str(),
                  t.checked, t.max_rel_error);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "loss=%.9g resamples=%zu max_rel_error=%.3e result=%s\n",
                report.loss, report.resamples, report.max_rel_error,
                report.passed ? "pass" : "fail");
  out << buf;
}

}  // namespace avs
