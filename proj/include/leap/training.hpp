#pragma once

// Loss assembly, the training loop with validation checkpointing and
// train-loss early stopping, evaluation metrics and the paired t-test.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leap/data.hpp"
#include "leap/interpolation.hpp"
#include "leap/likelihood.hpp"
#include "leap/model.hpp"
#include "leap/ode.hpp"
#include "leap/vector_fields.hpp"

namespace leap {

enum class ModelKind { leap, ncde };

ModelKind parse_model_kind(const std::string& name);
std::string model_kind_name(ModelKind k);

enum class Metric { accuracy, auroc, mse };

Metric parse_metric(const std::string& name);
std::string metric_name(Metric m);
// True when larger values are better.
bool higher_is_better(Metric m);

struct TrainConfig {
  double alpha = 1e-6;
  double beta = 1e-6;
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_iter = 100;  // epochs
  std::size_t patience = 50;
  std::uint64_t seed = 0;
  SolveSpec solver;            // method and substeps; the grid comes from the data
  NoiseSpec noise;             // seed is replaced per step
  InterpolationScheme scheme = InterpolationScheme::natural_cubic;
  Metric metric = Metric::accuracy;

  void validate() const;
};

// Either model family behind one parameter handle.
struct ModelParams {
  ModelKind kind = ModelKind::leap;
  LeapParams leap;
  NcdeParams ncde;

  const Architecture& arch() const { return kind == ModelKind::leap ? leap.arch : ncde.arch; }
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
};

ModelParams build_model(ModelKind kind, const Architecture& arch, std::uint64_t seed);

// Copies of every parameter value, restorable in place.
using ParamSnapshot = std::vector<std::vector<double>>;
ParamSnapshot snapshot(const ModelParams& params);
void restore(const ModelParams& params, const ParamSnapshot& values);

ModelOutput model_forward(const Batch& batch, const ModelParams& params, const SolveSpec& solver);

// (sum over knots and samples of alpha * masked ||Y - x||^2 + beta * penalty) / (M * N).
Tensor loss_LY(const std::vector<Tensor>& y_knots, const std::vector<Tensor>& x_knots,
               const std::vector<Tensor>& masks, const Tensor& penalty, double alpha, double beta,
               std::size_t M, std::size_t N);

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
Tensor mse_loss(const Tensor& predictions, const Tensor& targets);

struct LossParts {
  Tensor total;
  Tensor task;
  Tensor path;  // L_Y; zero for the baseline
};

// Task loss plus L_Y over knots 1..N; `noise_seed` fixes the trace noise.
LossParts total_loss(const Batch& batch, const ModelParams& params, const TrainConfig& config,
                     std::uint64_t noise_seed);

class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(const GradMap& grads);
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 = initial parameters
  double best_val_metric = 0.0;
  bool stopped_early = false;
  std::optional<std::string> divergence;  // set when a step diverged
};

// Trains `params` in place; on return they hold the best validation checkpoint.
TrainResult train(const Dataset& data, const std::vector<std::size_t>& train_idx,
                  const std::vector<std::size_t>& val_idx, ModelParams& params, const TrainConfig& config);

// ---- evaluation ---------------------------------------------------------------

double accuracy(const Tensor& logits, const std::vector<int>& labels);
// Mann-Whitney AUROC with ties credited 0.5. Throws MetricError when a class is absent.
double auroc(const std::vector<int>& labels, const std::vector<double>& scores);
double mean_squared_error(const std::vector<double>& predictions, const std::vector<double>& targets);

struct EvalResult {
  std::size_t n = 0;
  double accuracy = 0.0;
  std::optional<double> auroc;
  double mse = 0.0;
  // Forecasting: L2 error per sample and horizon step, [n][horizon].
  std::vector<std::vector<double>> step_errors;
  double metric(Metric m) const;
};

EvalResult evaluate(const Dataset& data, const std::vector<std::size_t>& indices, const ModelParams& params,
                    const TrainConfig& config);

// Mean |Y(t_i) - x_i| over observed knots, LEAP models only.
double path_fit_error(const Dataset& data, const std::vector<std::size_t>& indices, const LeapParams& params,
                      const TrainConfig& config);

struct TTestResult {
  double t = 0.0;
  double p = 0.0;  // one-sided, H1: mean(ours - base) < 0
  std::size_t dof = 0;
};

TTestResult paired_ttest(const std::vector<double>& errors_ours, const std::vector<double>& errors_base);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  std::vector<double> values;
};

Aggregate aggregate(const std::vector<double>& values);

}  // namespace leap
