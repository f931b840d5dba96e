#include "leap/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <boost/math/distributions/students_t.hpp>

#include "leap/errors.hpp"

namespace leap {

ModelKind parse_model_kind(const std::string& name) {
  if (name == "leap") return ModelKind::leap;
  if (name == "ncde") return ModelKind::ncde;
  throw ConfigError("unknown model '" + name + "'");
}

std::string model_kind_name(ModelKind k) { return k == ModelKind::leap ? "leap" : "ncde"; }

Metric parse_metric(const std::string& name) {
  if (name == "accuracy") return Metric::accuracy;
  if (name == "auroc") return Metric::auroc;
  if (name == "mse") return Metric::mse;
  throw ConfigError("unknown metric '" + name + "'");
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::auroc: return "auroc";
    case Metric::mse: return "mse";
  }
  return "accuracy";
}

bool higher_is_better(Metric m) { return m != Metric::mse; }

void TrainConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("alpha and beta must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (solver.substeps < 1) throw ConfigError("substeps must be at least 1");
  if (noise.samples_per_segment < 1) throw ConfigError("noise samples per segment must be at least 1");
}

// ---- parameters ------------------------------------------------------------------

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
  return kind == ModelKind::leap ? leap.named_parameters() : ncde.named_parameters();
}

std::vector<Tensor> ModelParams::parameters() const {
  return kind == ModelKind::leap ? leap.parameters() : ncde.parameters();
}

ModelParams build_model(ModelKind kind, const Architecture& arch, std::uint64_t seed) {
  ModelParams p;
  p.kind = kind;
  if (kind == ModelKind::leap) {
    p.leap = build_leap_params(arch, seed);
  } else {
    p.ncde = build_ncde_params(arch, seed);
  }
  return p;
}

ParamSnapshot snapshot(const ModelParams& params) {
  ParamSnapshot out;
  for (const Tensor& t : params.parameters()) out.push_back(t.to_vector());
  return out;
}

void restore(const ModelParams& params, const ParamSnapshot& values) {
  std::vector<Tensor> ps = params.parameters();
  if (ps.size() != values.size()) throw ContractError("snapshot does not match the parameter set");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto dst = ps[i].mutable_data();
    if (dst.size() != values[i].size()) throw ContractError("snapshot tensor size mismatch");
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

ModelOutput model_forward(const Batch& batch, const ModelParams& params, const SolveSpec& solver) {
  return params.kind == ModelKind::leap ? forward(batch, params.leap, solver)
                                        : ncde_baseline_forward(batch, params.ncde, solver);
}

// ---- losses ----------------------------------------------------------------------

Tensor loss_LY(const std::vector<Tensor>& y_knots, const std::vector<Tensor>& x_knots,
               const std::vector<Tensor>& masks, const Tensor& penalty, double alpha, double beta,
               std::size_t M, std::size_t N) {
  if (M < 1 || N < 1) throw ContractError("loss_LY needs M, N >= 1");
  if (y_knots.size() != x_knots.size() || masks.size() != x_knots.size())
    throw DimensionError("loss_LY: knot lists differ in length");
  Tensor total = Tensor::scalar(0.0);
  if (alpha != 0.0) {
    for (std::size_t i = 0; i < y_knots.size(); ++i)
      total = add(total, sum(mul(masks[i], square(sub(y_knots[i], x_knots[i])))));
    total = scale(total, alpha);
  }
  if (beta != 0.0) total = add(total, scale(penalty, beta));
  return scale(total, 1.0 / static_cast<double>(M * N));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t b = logits.rows(), k = logits.cols();
  if (labels.size() != b) throw DimensionError("cross_entropy: label count differs from batch size");
  std::vector<double> onehot(b * k, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw ContractError("cross_entropy: label outside [0, classes)");
    onehot[i * k + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return scale(sum(mul(log_softmax(logits), Tensor::from({b, k}, std::move(onehot)))),
               -1.0 / static_cast<double>(b));
}

Tensor mse_loss(const Tensor& predictions, const Tensor& targets) {
  if (predictions.shape() != targets.shape())
    throw DimensionError("mse_loss: prediction shape " + shape_str(predictions.shape()) +
                         " differs from target shape " + shape_str(targets.shape()));
  return mean(square(sub(predictions, targets)));
}

LossParts total_loss(const Batch& batch, const ModelParams& params, const TrainConfig& config,
                     std::uint64_t noise_seed) {
  ModelOutput out = model_forward(batch, params, config.solver);
  LossParts parts;
  parts.task = params.arch().task == TaskKind::classify ? cross_entropy(out.values, batch.labels)
                                                        : mse_loss(out.values, batch.targets);
  parts.path = Tensor::scalar(0.0);
  parts.total = parts.task;
  if (params.kind != ModelKind::leap || (config.alpha == 0.0 && config.beta == 0.0)) return parts;

  const std::size_t n = batch.grid.size() - 1;
  Tensor penalty = Tensor::scalar(0.0);
  if (config.beta != 0.0) {
    NoiseSpec noise = config.noise;
    noise.seed = noise_seed;
    penalty = density_penalty(batch, params.leap, noise, config.solver);
  }
  std::vector<Tensor> y(out.y_knots.begin() + 1, out.y_knots.end());
  std::vector<Tensor> x(batch.x_knots.begin() + 1, batch.x_knots.end());
  std::vector<Tensor> m(batch.mask_knots.begin() + 1, batch.mask_knots.end());
  parts.path = loss_LY(y, x, m, penalty, config.alpha, config.beta, batch.size(), n);
  parts.total = add(parts.task, parts.path);
  return parts;
}

// ---- optimizer -------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(const GradMap& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (!grads.contains(params_[k])) continue;
    const Tensor g = grads.at(params_[k]);
    auto p = params_[k].mutable_data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * gd[i];
      v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * gd[i] * gd[i];
      p[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
    }
  }
}

// ---- training loop ---------------------------------------------------------------

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t step_seed(std::uint64_t seed, std::size_t epoch, std::size_t batch) {
  return mix(mix(mix(seed) ^ epoch) ^ batch);
}

bool improves(double candidate, double best, Metric m) {
  if (std::isnan(best)) return !std::isnan(candidate);
  return higher_is_better(m) ? candidate > best : candidate < best;
}

}  // namespace

TrainResult train(const Dataset& data, const std::vector<std::size_t>& train_idx,
                  const std::vector<std::size_t>& val_idx, ModelParams& params, const TrainConfig& config) {
  config.validate();
  if (train_idx.empty()) throw ContractError("training set is empty");
  for (std::size_t i : train_idx)
    if (std::find(val_idx.begin(), val_idx.end(), i) != val_idx.end())
      throw ContractError("train and validation sets overlap");

  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto validate_metric = [&]() {
    return val_idx.empty() ? nan : evaluate(data, val_idx, params, config).metric(config.metric);
  };

  TrainResult result;
  ParamSnapshot best = snapshot(params);
  result.best_val_metric = validate_metric();
  if (config.max_iter == 0) return result;

  Adam opt(params.parameters(), config.lr);
  std::mt19937_64 shuffle_rng(mix(config.seed));
  std::vector<std::size_t> order = train_idx;
  double best_train = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_iter; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t count = 0;
    try {
      const auto batches = group_batches(data, order, config.batch_size);
      for (std::size_t k = 0; k < batches.size(); ++k) {
        Batch batch = make_batch(data, batches[k], config.scheme);
        LossParts loss = total_loss(batch, params, config, step_seed(config.seed, epoch, k));
        GradMap grads = backward(loss.total);
        opt.step(grads);
        loss_sum += loss.total.item() * static_cast<double>(batch.size());
        count += batch.size();
      }
    } catch (const NumericError& e) {
      result.divergence = std::string("epoch ") + std::to_string(epoch) + ": " + e.what();
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(count);
    try {
      rec.val_metric = validate_metric();
    } catch (const NumericError& e) {
      result.divergence = std::string("validation after epoch ") + std::to_string(epoch) + ": " + e.what();
      break;
    }
    result.history.push_back(rec);
    if (val_idx.empty() || improves(rec.val_metric, result.best_val_metric, config.metric)) {
      best = snapshot(params);
      result.best_epoch = epoch;
      result.best_val_metric = rec.val_metric;
    }
    if (rec.train_loss < best_train) {
      best_train = rec.train_loss;
      stale = 0;
    } else if (++stale >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  restore(params, best);
  return result;
}

// ---- evaluation ------------------------------------------------------------------

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t b = logits.rows(), k = logits.cols();
  if (labels.size() != b) throw DimensionError("accuracy: label count differs from rows");
  if (b == 0) throw MetricError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits.at(i, j) > logits.at(i, arg)) arg = j;
    hits += static_cast<int>(arg) == labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(b);
}

double auroc(const std::vector<int>& labels, const std::vector<double>& scores) {
  if (labels.size() != scores.size()) throw DimensionError("auroc: label and score counts differ");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      pos.push_back(scores[i]);
    } else if (labels[i] == 0) {
      neg.push_back(scores[i]);
    } else {
      throw MetricError("auroc needs binary labels");
    }
  }
  if (pos.empty() || neg.empty()) throw MetricError("auroc undefined: one class is absent");
  // Sort negatives once; count strictly-below and ties for every positive.
  std::sort(neg.begin(), neg.end());
  double credit = 0.0;
  for (double p : pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(neg.begin(), neg.end(), p);
    credit += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return credit / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double mean_squared_error(const std::vector<double>& predictions, const std::vector<double>& targets) {
  if (predictions.size() != targets.size()) throw DimensionError("mse: sizes differ");
  if (predictions.empty()) throw MetricError("mse of an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) s += std::pow(predictions[i] - targets[i], 2);
  return s / static_cast<double>(predictions.size());
}

double EvalResult::metric(Metric m) const {
  switch (m) {
    case Metric::accuracy: return accuracy;
    case Metric::mse: return mse;
    case Metric::auroc:
      if (!auroc) throw MetricError("auroc unavailable for this evaluation set");
      return *auroc;
  }
  return accuracy;
}

EvalResult evaluate(const Dataset& data, const std::vector<std::size_t>& indices, const ModelParams& params,
                    const TrainConfig& config) {
  if (indices.empty()) throw MetricError("evaluation set is empty");
  NoGradGuard no_grad;
  EvalResult r;
  r.n = indices.size();
  std::vector<int> labels;
  std::vector<double> scores, preds, targets;
  std::size_t hits = 0;
  const std::size_t eval_batch = std::max<std::size_t>(config.batch_size, 128);
  for (const auto& idx : group_batches(data, indices, eval_batch)) {
    Batch batch = make_batch(data, idx, config.scheme);
    ModelOutput out = model_forward(batch, params, config.solver);
    if (params.arch().task == TaskKind::classify) {
      hits += static_cast<std::size_t>(std::llround(accuracy(out.values, batch.labels) * batch.size()));
      Tensor prob = exp(log_softmax(out.values));
      for (std::size_t i = 0; i < batch.size(); ++i) {
        labels.push_back(batch.labels[i]);
        if (out.values.cols() == 2) scores.push_back(prob.at(i, 1));
      }
    } else {
      const std::size_t d = data.dims, h = data.horizon;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<double> steps(h);
        for (std::size_t s = 0; s < h; ++s) {
          double sq = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            const double p = out.values.at(i, s * d + c), t = batch.targets.at(i, s * d + c);
            preds.push_back(p);
            targets.push_back(t);
            sq += (p - t) * (p - t);
          }
          steps[s] = std::sqrt(sq);
        }
        r.step_errors.push_back(std::move(steps));
      }
    }
  }
  if (params.arch().task == TaskKind::classify) {
    r.accuracy = static_cast<double>(hits) / static_cast<double>(r.n);
    if (scores.size() == labels.size()) {
      try {
        r.auroc = auroc(labels, scores);
      } catch (const MetricError&) {
        r.auroc.reset();
      }
    }
  } else {
    r.mse = mean_squared_error(preds, targets);
  }
  return r;
}

double path_fit_error(const Dataset& data, const std::vector<std::size_t>& indices, const LeapParams& params,
                      const TrainConfig& config) {
  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& idx : group_batches(data, indices, std::max<std::size_t>(config.batch_size, 128))) {
    Batch batch = make_batch(data, idx, config.scheme);
    ModelOutput out = forward(batch, params, config.solver);
    for (std::size_t k = 0; k < batch.grid.size(); ++k) {
      const auto y = out.y_knots[k].data(), x = batch.x_knots[k].data(), m = batch.mask_knots[k].data();
      for (std::size_t j = 0; j < y.size(); ++j) {
        if (m[j] == 0.0) continue;
        total += std::abs(y[j] - x[j]);
        ++count;
      }
    }
  }
  if (count == 0) throw MetricError("no observed knots to compare");
  return total / static_cast<double>(count);
}

TTestResult paired_ttest(const std::vector<double>& errors_ours, const std::vector<double>& errors_base) {
  if (errors_ours.size() != errors_base.size()) throw ContractError("paired t-test needs equal lengths");
  const std::size_t n = errors_ours.size();
  if (n < 2) throw ContractError("paired t-test needs at least two pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = errors_ours[i] - errors_base[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) throw DegenerateVarianceError("paired differences have zero variance");
  TTestResult r;
  r.dof = n - 1;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(r.dof));
  r.p = boost::math::cdf(dist, r.t);
  return r;
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.values = values;
  if (values.empty()) return a;
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

}  // namespace leap
