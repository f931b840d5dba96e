// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Pass criterion names to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "expm.hpp"
#include "gradient_check.hpp"
#include "leap/config.hpp"
#include "leap/interpolation.hpp"
#include "leap/likelihood.hpp"
#include "leap/model.hpp"
#include "leap/ode.hpp"
#include "leap/training.hpp"
#include "model_oracles.hpp"

using namespace leap;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::vector<std::size_t> range(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// ---- splines --------------------------------------------------------------------

Outcome spline_suite() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> gap(0.2, 2.0), val(-3.0, 3.0), coef(-2.0, 2.0);
  std::uniform_int_distribution<int> count(3, 15);
  double interp = 0, boundary = 0, c1 = 0, c2 = 0, exact = 0, slope = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = count(rng);
    std::vector<double> t{0.0}, y{val(rng)};
    for (int i = 1; i < n; ++i) {
      t.push_back(t.back() + gap(rng));
      y.push_back(val(rng));
    }
    const ControlPath p = fit_natural_cubic(t, {y}, {std::vector<bool>(t.size(), true)});
    const ChannelSpline& s = p.channel(0);
    for (std::size_t i = 0; i < t.size(); ++i) interp = std::max(interp, std::abs(p.value(t[i])[0] - y[i]));
    const CubicSegment& last = s.segments.back();
    boundary = std::max({boundary, std::abs(s.second_derivative(t.front())),
                         std::abs(2 * last.c + 6 * last.d * (t.back() - t[t.size() - 2]))});
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
      const CubicSegment& l = s.segments[i - 1];
      const CubicSegment& r = s.segments[i];
      const double h = t[i] - t[i - 1];
      c1 = std::max(c1, std::abs(l.b + 2 * l.c * h + 3 * l.d * h * h - r.b));
      c2 = std::max(c2, std::abs(2 * l.c + 6 * l.d * h - 2 * r.c));
    }
    for (double v = 0.013; v < t.back() - 1e-3; v += 0.071) {
      const double fd = (p.value(v + 1e-6)[0] - p.value(v - 1e-6)[0]) / 2e-6;
      slope = std::max(slope, std::abs(p.derivative(v)[0] - fd));
    }
    // cubics with zero end curvature are affine and must be reproduced exactly
    const double a0 = coef(rng), a1 = coef(rng);
    std::vector<double> line;
    for (double v : t) line.push_back(a0 + a1 * v);
    const ControlPath q = fit_natural_cubic(t, {line}, {std::vector<bool>(t.size(), true)});
    for (double v = 0.0; v <= t.back(); v += 0.05) exact = std::max(exact, std::abs(q.value(v)[0] - a0 - a1 * v));
  }
  const bool pass = interp < 1e-12 && boundary < 1e-10 && c1 < 1e-10 && c2 < 1e-10 && exact < 1e-9 && slope < 1e-6;
  return {pass, "100 fits: knot " + num(interp) + ", S'' ends " + num(boundary) + ", C1 " + num(c1) + ", C2 " +
                    num(c2) + ", derivative vs differences " + num(slope) + ", cubic exactness " + num(exact)};
}

// ---- solvers --------------------------------------------------------------------

SolveSpec spec_for(SolverMethod m, std::vector<double> grid, std::size_t substeps) {
  SolveSpec s;
  s.method = m;
  s.t_grid = std::move(grid);
  s.substeps = substeps;
  return s;
}

double decay_error(SolverMethod m, std::size_t steps) {
  auto traj = solve_ivp([](const Tensor& z, double) { return neg(z); }, Tensor::scalar(1.0),
                        spec_for(m, {0.0, 1.0}, steps));
  return std::abs(traj.back().item() - std::exp(-1.0));
}

Outcome solver_orders() {
  const double euler = decay_error(SolverMethod::euler, 100) / decay_error(SolverMethod::euler, 200);
  const double rk4 = decay_error(SolverMethod::rk4, 10) / decay_error(SolverMethod::rk4, 20);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    testing::Mat b(3, std::vector<double>(3)), c(3, std::vector<double>(3)), a(3, std::vector<double>(3));
    for (auto& r : b)
      for (double& v : r) v = u(rng);
    for (auto& r : c)
      for (double& v : r) v = u(rng);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double btb = 0;
        for (int k = 0; k < 3; ++k) btb += b[k][i] * b[k][j];
        a[i][j] = -btb - (i == j ? 0.5 : 0.0) + 0.5 * (c[i][j] - c[j][i]);
      }
    std::vector<double> at;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) at.push_back(a[j][i]);
    const Tensor a_t = Tensor::from({3, 3}, at);
    const std::vector<double> z0{u(rng), u(rng), u(rng)};
    auto traj = solve_ivp([&](const Tensor& z, double) { return matmul(z, a_t); }, Tensor::from({1, 3}, z0),
                          spec_for(SolverMethod::rk4, {0.0, 1.0}, 1000));
    const testing::Mat e = testing::expm(a);
    for (int i = 0; i < 3; ++i) {
      double expected = 0;
      for (int j = 0; j < 3; ++j) expected += e[i][j] * z0[j];
      worst = std::max(worst, std::abs(traj.back().at(i) - expected));
    }
  }
  const bool pass = euler >= 1.8 && euler <= 2.2 && rk4 >= 12 && rk4 <= 20 && worst < 1e-9;
  return {pass, "euler ratio " + num(euler) + ", rk4 ratio " + num(rk4) + ", expm error " + num(worst)};
}

// ---- gradients ------------------------------------------------------------------

Outcome gradient_suite() {
  double worst = 0.0;
  std::string where;
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    for (TaskKind task : {TaskKind::classify, TaskKind::forecast}) {
      SyntheticSpec s;
      s.kind = task == TaskKind::classify ? SyntheticKind::damped_oscillator : SyntheticKind::spiral;
      s.n_samples = 3;
      s.length = 10;
      s.horizon = 2;
      s.seed = 500 + seed;
      const Dataset d = drop_observations(generate_synthetic(s), 0.3, seed);
      const std::size_t out = task == TaskKind::classify ? d.classes : d.horizon * d.dims;
      Architecture a = Architecture::defaults(task, d.dims, out, 5);
      a.e_dim = a.h_dim = a.z_dim = 3;
      TrainConfig c;
      c.alpha = 0.3;
      c.beta = 0.2;
      c.solver.substeps = 1;
      c.metric = task == TaskKind::classify ? Metric::accuracy : Metric::mse;
      const Batch b = make_batch(d, range(d.size()));
      for (ModelKind kind : {ModelKind::leap, ModelKind::ncde}) {
        const ModelParams p = build_model(kind, a, 900 + seed);
        const auto r = testing::check_total_loss_gradient(b, p, c, 77 + seed);
        if (r.worst > worst) {
          worst = r.worst;
          where = model_kind_name(kind) + "/" + task_name(task) + " seed " + std::to_string(seed) + " " +
                  r.worst_name;
        }
      }
    }
  return {worst < 1e-3, "40 models, worst relative error " + num(worst) + " (" + where + ")"};
}

// ---- Hutchinson -----------------------------------------------------------------

Tensor linear_field(const Tensor& h, const std::vector<double>& a, std::size_t n) {
  std::vector<double> at(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) at[j * n + i] = a[i * n + j];
  return matmul(h, Tensor::from({n, n}, at));
}

Outcome hutchinson_suite() {
  std::mt19937_64 rng(7);
  const std::vector<double> diag{2, 0, 0, 3};
  const Tensor all_signs = Tensor::from({4, 2}, {1, 1, 1, -1, -1, 1, -1, -1});
  bool diag_exact = true;
  const TraceEval diag_eval = eval_with_trace([&](const Tensor& x) { return linear_field(x, diag, 2); },
                                              Tensor::from({4, 2}, {0.3, -1, 2, 0.5, -0.7, 0.1, 1.5, 1.5}), all_signs);
  for (double v : diag_eval.trace.data()) diag_exact = diag_exact && v == 5.0;

  const std::vector<double> swap{0, 1, 1, 0};
  double enumerated = 0.0;
  const TraceEval swap_eval =
      eval_with_trace([&](const Tensor& x) { return linear_field(x, swap, 2); }, Tensor::zeros({4, 2}), all_signs);
  for (double v : swap_eval.trace.data()) enumerated += v / 4.0;

  const std::size_t d = 4, w = 6;
  std::normal_distribution<double> n01;
  std::vector<double> wv(d * w), bv(w), hv(d);
  for (double& v : wv) v = 0.5 * n01(rng);
  for (double& v : bv) v = 0.3 * n01(rng);
  for (double& v : hv) v = n01(rng);
  const Tensor W = Tensor::from({d, w}, wv), bias = Tensor::from({1, w}, bv), h = Tensor::from({1, d}, hv);
  auto f = [&](const Tensor& x) { return matmul(tanh(add(matmul(x, W), bias)), transpose(W)); };
  double exact = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> e(d, 0.0);
    e[i] = 1.0;
    const Tensor x = h.detach_leaf();
    exact += vjp(f(x), x, Tensor::from({1, d}, e), false).data()[i];
  }
  const std::size_t n = 100000;
  const Tensor eps = sample_noise(NoiseDistribution::gaussian, n, d, rng);
  const TraceEval te = eval_with_trace(f, matmul(Tensor::full({n, 1}, 1.0), h), eps);
  const double mean = std::accumulate(te.trace.data().begin(), te.trace.data().end(), 0.0) / n;
  const double rel = std::abs(mean - exact) / std::abs(exact);

  const bool pass = diag_exact && enumerated == 0.0 && rel < 0.01;
  return {pass, std::string("diagonal exact ") + (diag_exact ? "yes" : "no") + ", swap enumerated mean " +
                    num(enumerated) + ", MLP 1e5-sample relative error " + num(rel)};
}

// ---- joint solve ----------------------------------------------------------------

Architecture small_arch(TaskKind task) {
  Architecture a = Architecture::defaults(task, 2, task == TaskKind::classify ? 3 : 4, 8);
  a.e_dim = a.h_dim = a.z_dim = 4;
  return a;
}

Outcome chain_rule() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    LeapParams p = build_leap_params(small_arch(seed % 2 ? TaskKind::forecast : TaskKind::classify), 3000 + seed);
    if (seed % 3 == 0) {
      MlpSpec m;
      m.layer_widths = {4, 8, 2};
      m.hidden_activation = Activation::tanh;
      m.final_activation = Activation::none;
      p.theta_m = Mlp(m, seed);
    }
    std::mt19937_64 rng(seed + 40);
    std::normal_distribution<double> n01;
    std::vector<double> h0(8), z0(8);
    for (double& v : h0) v = n01(rng);
    for (double& v : z0) v = n01(rng);
    const Tensor H0 = Tensor::from({2, 4}, h0), Z0 = Tensor::from({2, 4}, z0);
    const Tensor joint = solve_joint({Z0, H0}, p, spec_for(SolverMethod::rk4, uniform_grid(0, 3, 3), 100)).z.back();
    const Tensor ref = testing::chain_rule_reference(p, Z0, H0, 3.0);
    worst = std::max(worst, testing::max_relative_error(sub(joint, Z0), sub(ref, Z0)));
  }
  return {worst < 1e-4, "10 models, worst relative error of z(T) - z(0) " + num(worst)};
}

Outcome flat_path() {
  double worst = 0.0, outside = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Architecture arch = small_arch(TaskKind::classify);
    LeapParams p = build_leap_params(arch, 11 + seed);
    p.theta_f = testing::flat_window_decoder(arch, 2.0, 5.0, 12 + seed);
    const JointTrajectory tr = solve_joint(
        {Tensor::full({1, 4}, 0.2), Tensor::from({1, 4}, {0.5, -0.4, 0.3, 1.0})}, p,
        spec_for(SolverMethod::rk4, uniform_grid(0, 8, 8), 4));
    for (std::size_t i = 3; i <= 5; ++i)
      for (std::size_t j = 0; j < 4; ++j) worst = std::max(worst, std::abs(tr.z[i].at(j) - tr.z[2].at(j)));
    outside = std::max(outside, testing::max_relative_error(tr.z[8], tr.z[5]));
  }
  return {worst < 1e-8 && outside > 1e-6,
          "max |z(t) - z(2)| on the flat window " + num(worst) + ", movement outside " + num(outside)};
}

// ---- spiral forecasting ---------------------------------------------------------

struct SpiralRun {
  double mse = 0.0;
  std::vector<double> per_instance;  // mean L2 over horizon steps
};

class SpiralBench {
 public:
  SpiralRun run(ModelKind kind, std::size_t horizon, std::uint64_t seed) {
    const auto key = std::make_tuple(kind, horizon, seed);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    RunConfig c = RunConfig::preset("spiral_forecast");
    c.data.synthetic.horizon = horizon;
    c.model.kind = kind;
    const Dataset& d = data(horizon, c);
    const DatasetSplit s = split(d.size(), c.data.split, c.data.seed);
    ModelParams p = build_model(kind, c.architecture(d), seed);
    TrainConfig tc = c.train;
    tc.seed = seed;
    train(d, s.train, s.val, p, tc);
    const EvalResult e = evaluate(d, s.test, p, tc);
    SpiralRun r;
    r.mse = e.mse;
    for (const auto& row : e.step_errors)
      r.per_instance.push_back(std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size()));
    std::fprintf(stderr, "  %s horizon %zu seed %llu: test mse %.5g\n", model_kind_name(kind).c_str(), horizon,
                 static_cast<unsigned long long>(seed), r.mse);
    return cache_[key] = r;
  }

 private:
  const Dataset& data(std::size_t horizon, const RunConfig& c) {
    auto it = datasets_.find(horizon);
    if (it == datasets_.end()) it = datasets_.emplace(horizon, c.load_dataset()).first;
    return it->second;
  }

  std::map<std::tuple<ModelKind, std::size_t, std::uint64_t>, SpiralRun> cache_;
  std::map<std::size_t, Dataset> datasets_;
};

SpiralBench bench;

struct Comparison {
  double leap = 0.0, ncde = 0.0;
  TTestResult t;
};

Comparison compare(std::size_t horizon, std::size_t seeds) {
  Comparison c;
  std::vector<double> ours, base;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const SpiralRun l = bench.run(ModelKind::leap, horizon, seed);
    const SpiralRun n = bench.run(ModelKind::ncde, horizon, seed);
    c.leap += l.mse / static_cast<double>(seeds);
    c.ncde += n.mse / static_cast<double>(seeds);
    if (ours.empty()) {
      ours.assign(l.per_instance.size(), 0.0);
      base.assign(n.per_instance.size(), 0.0);
    }
    for (std::size_t i = 0; i < ours.size(); ++i) {
      ours[i] += l.per_instance[i] / static_cast<double>(seeds);
      base[i] += n.per_instance[i] / static_cast<double>(seeds);
    }
  }
  c.t = paired_ttest(ours, base);
  return c;
}

Outcome spiral_ordering() {
  const Comparison c = compare(10, 5);
  return {c.leap <= c.ncde && c.t.p < 0.05, "5 seeds, mean test mse leap " + num(c.leap) + " vs ncde " +
                                                num(c.ncde) + ", paired t " + num(c.t.t) + ", p " + num(c.t.p)};
}

Outcome horizon_ordering() {
  bool pass = true;
  std::string detail;
  for (std::size_t h : {1, 5, 10}) {
    const Comparison c = compare(h, 3);
    pass = pass && c.leap <= c.ncde;
    detail += (detail.empty() ? "" : "; ") + std::string("H=") + std::to_string(h) + " leap " + num(c.leap) +
              " ncde " + num(c.ncde);
  }
  return {pass, detail};
}

// ---- path fit -------------------------------------------------------------------

Outcome path_fit() {
  SyntheticSpec s;
  s.n_samples = 20;
  s.length = 20;
  s.seed = 3;
  const Dataset d = drop_observations(generate_synthetic(s), 0.3, 3);
  Architecture a = Architecture::defaults(TaskKind::classify, d.dims, d.classes, 16);
  a.e_dim = a.h_dim = a.z_dim = 16;
  ModelParams p = build_model(ModelKind::leap, a, 0);
  TrainConfig c;
  c.alpha = 100.0;
  c.beta = 0.0;
  c.lr = 1e-2;
  c.max_iter = 300;
  c.patience = 300;
  c.solver.substeps = 1;
  c.metric = Metric::accuracy;
  const std::vector<std::size_t> all = range(d.size());
  const double before = path_fit_error(d, all, p.leap, c);
  // no validation set: training keeps the final parameters
  const TrainResult r = train(d, all, {}, p, c);
  const double after = path_fit_error(d, all, p.leap, c);
  const double drop = 1.0 - after / before;
  return {drop >= 0.5, "mean |Y - x| " + num(before) + " -> " + num(after) + " (" + num(100 * drop) +
                           "% decrease, " + std::to_string(r.history.size()) + " epochs)"};
}

// ---- statistics -----------------------------------------------------------------

Outcome statistics() {
  const TTestResult t = paired_ttest({1, 2, 3, 4}, {0, 0, 0, 0});
  const double a = auroc({0, 0, 1, 1}, {0.1, 0.4, 0.35, 0.8});
  return {std::abs(t.t - 3.873) <= 1e-3 && a == 0.75, "t " + num(t.t) + ", auroc " + num(a)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"spline_suite", spline_suite},
      {"solver_orders", solver_orders},
      {"gradient_suite", gradient_suite},
      {"hutchinson_suite", hutchinson_suite},
      {"chain_rule", chain_rule},
      {"flat_path", flat_path},
      {"spiral_leap_vs_ncde", spiral_ordering},
      {"horizon_ablation", horizon_ordering},
      {"path_fit", path_fit},
      {"statistics", statistics},
  };
  std::vector<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %-20s %8.1fs  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
