#include "leap/likelihood.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "finite_diff.hpp"
#include "leap/errors.hpp"

using namespace leap;

namespace {

Tensor linear_field(const Tensor& h, const std::vector<double>& a, std::size_t n) {
  // rows of h times A^T, i.e. f(h) = A h per row
  std::vector<double> at(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) at[j * n + i] = a[i * n + j];
  return matmul(h, Tensor::from({n, n}, at));
}

TimeSeriesSample sample_from(const std::vector<double>& times, std::size_t dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  TimeSeriesSample s;
  s.id = "s" + std::to_string(seed);
  s.times = times;
  for (std::size_t i = 0; i < times.size(); ++i) {
    s.values.emplace_back();
    for (std::size_t c = 0; c < dims; ++c) s.values.back().push_back(n01(rng));
  }
  s.observed.assign(times.size(), std::vector<bool>(dims, true));
  return s;
}

Batch batch_of(std::size_t n, const std::vector<double>& times, std::size_t dims) {
  Dataset d;
  d.task = TaskKind::classify;
  d.dims = dims;
  d.classes = 2;
  for (std::size_t i = 0; i < n; ++i) d.samples.push_back(sample_from(times, dims, i));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return make_batch(d, idx);
}

// f(h, t) = h W_h + t w_t + b with the h-block of W set to `a_transposed`.
Mlp affine_decoder(std::size_t h_dim, const std::vector<double>& a) {
  Mlp f(MlpSpec::affine(h_dim + 1, h_dim), 3);
  auto w = f.weights()[0].mutable_data();
  for (std::size_t i = 0; i < h_dim; ++i)
    for (std::size_t j = 0; j < h_dim; ++j) w[i * h_dim + j] = a[j * h_dim + i];
  return f;
}

LeapParams params_with_decoder(std::size_t x_dim, std::size_t h_dim, Mlp f) {
  Architecture arch = Architecture::defaults(TaskKind::classify, x_dim, 2, 6);
  arch.e_dim = arch.z_dim = 3;
  arch.h_dim = h_dim;
  LeapParams p = build_leap_params(arch, 1);
  p.theta_f = std::move(f);
  return p;
}

SolveSpec rk4(std::size_t substeps) {
  SolveSpec s;
  s.substeps = substeps;
  return s;
}

}  // namespace

TEST(SampleNoise, RademacherSignsAndGaussianMoments) {
  std::mt19937_64 rng(0);
  Tensor r = sample_noise(NoiseDistribution::rademacher, 100, 3, rng);
  for (double v : r.data()) EXPECT_TRUE(v == 1.0 || v == -1.0);
  Tensor g = sample_noise(NoiseDistribution::gaussian, 20000, 1, rng);
  double m = 0, s2 = 0;
  for (double v : g.data()) m += v;
  m /= 20000;
  for (double v : g.data()) s2 += (v - m) * (v - m);
  EXPECT_NEAR(m, 0.0, 0.03);
  EXPECT_NEAR(s2 / 19999, 1.0, 0.05);
  EXPECT_EQ(parse_noise("gaussian"), NoiseDistribution::gaussian);
  EXPECT_THROW(parse_noise("uniform"), ConfigError);
}

TEST(Hutchinson, DiagonalFieldIsExactForEveryRademacherDraw) {
  const std::vector<double> a{2, 0, 0, 3};
  const Tensor h = Tensor::from({4, 2}, {0.3, -1.0, 2.0, 0.5, -0.7, 0.1, 1.5, 1.5});
  const Tensor eps = Tensor::from({4, 2}, {1, 1, 1, -1, -1, 1, -1, -1});
  TraceEval te = eval_with_trace([&](const Tensor& x) { return linear_field(x, a, 2); }, h, eps);
  for (double v : te.trace.data()) EXPECT_EQ(v, 5.0);
  EXPECT_EQ(hutchinson_trace([&](const Tensor& x) { return linear_field(x, a, 2); },
                             Tensor::from({1, 2}, {4, 4}), Tensor::from({1, 2}, {-1, 1}))
                .item(),
            5.0);
}

TEST(Hutchinson, SwapMatrixEnumeratesToZeroMean) {
  const std::vector<double> a{0, 1, 1, 0};
  auto f = [&](const Tensor& x) { return linear_field(x, a, 2); };
  // all four Rademacher outcomes
  TraceEval te = eval_with_trace(f, Tensor::zeros({4, 2}), Tensor::from({4, 2}, {1, 1, 1, -1, -1, 1, -1, -1}));
  double total = 0.0;
  for (double v : te.trace.data()) {
    EXPECT_TRUE(v == 2.0 || v == -2.0);
    total += v;
  }
  EXPECT_EQ(total, 0.0);

  std::mt19937_64 rng(4);
  const std::size_t n = 10000;
  Tensor eps = sample_noise(NoiseDistribution::rademacher, n, 2, rng);
  TraceEval many = eval_with_trace(f, Tensor::zeros({n, 2}), eps);
  double mean = 0.0;
  for (double v : many.trace.data()) mean += v;
  mean /= n;
  EXPECT_LT(std::abs(mean), 3.0 * 2.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Hutchinson, MlpMeanMatchesExactJacobianTrace) {
  // f(h) = tanh(h W + b) W^T: the Jacobian W diag(1 - tanh^2) W^T is positive
  // semi-definite, so the Gaussian estimator's relative spread stays under 0.5%.
  const std::size_t d = 4, w = 6;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  std::vector<double> wv(d * w), bv(w), hv(d);
  for (double& v : wv) v = 0.5 * n01(rng);
  for (double& v : bv) v = 0.3 * n01(rng);
  for (double& v : hv) v = n01(rng);
  const Tensor W = Tensor::from({d, w}, wv), b = Tensor::from({1, w}, bv);
  auto f = [&](const Tensor& h) { return matmul(tanh(add(matmul(h, W), b)), transpose(W)); };
  const Tensor h = Tensor::from({1, d}, hv);

  double exact = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> e(d, 0.0);
    e[i] = 1.0;
    Tensor x = h.detach_leaf();
    exact += vjp(f(x), x, Tensor::from({1, d}, e), false).data()[i];
  }

  const std::size_t n = 100000;
  Tensor eps = sample_noise(NoiseDistribution::gaussian, n, d, rng);
  Tensor states = matmul(Tensor::full({n, 1}, 1.0), h);
  TraceEval te = eval_with_trace(f, states, eps);
  double mean = 0.0;
  for (double v : te.trace.data()) mean += v;
  mean /= n;
  EXPECT_NEAR(mean, exact, 0.01 * std::abs(exact));
}

TEST(Hutchinson, ShapeMismatch) {
  auto f = [](const Tensor& x) { return x; };
  EXPECT_THROW(eval_with_trace(f, Tensor::zeros({2, 2}), Tensor::zeros({2, 3})), ContractError);
}

TEST(Hutchinson, NoGradCallerGetsDetachedResults) {
  NoGradGuard guard;
  const std::vector<double> a{2, 0, 0, 3};
  TraceEval te = eval_with_trace([&](const Tensor& x) { return linear_field(x, a, 2); }, Tensor::zeros({1, 2}),
                                 Tensor::from({1, 2}, {1, -1}));
  EXPECT_EQ(te.trace.item(), 5.0);
  EXPECT_FALSE(te.trace.requires_grad());
}

TEST(DensityPenalty, ZeroFieldGivesZero) {
  LeapParams p = params_with_decoder(2, 2, affine_decoder(2, {0, 0, 0, 0}));
  Batch b = batch_of(3, {0, 0.7, 1.0, 2.5, 4.0}, 2);
  EXPECT_EQ(density_penalty(b, p, {}, rk4(2)).item(), 0.0);
}

TEST(DensityPenalty, ScalarLinearFieldIntegratesToCTimesT) {
  const double c = -0.8;
  LeapParams p = params_with_decoder(1, 1, affine_decoder(1, {c}));
  // irregular raw times; the normalized grid spans [0, N]
  Batch one = batch_of(1, {0, 0.3, 1.9, 2.0, 5.5, 6.0}, 1);
  EXPECT_NEAR(density_penalty(one, p, {}, rk4(1)).item(), c * 5.0, 1e-12);
  Batch three = batch_of(3, {0, 0.3, 1.9, 2.0, 5.5, 6.0}, 1);
  NoiseSpec gauss{NoiseDistribution::gaussian, 1, 3};
  // Gaussian noise: c eps^2 per segment, no longer exact
  const double penalty = density_penalty(three, p, gauss, rk4(1)).item();
  EXPECT_NE(penalty, 3.0 * c * 5.0);
  EXPECT_NEAR(density_penalty(three, p, {}, rk4(1)).item(), 3.0 * c * 5.0, 1e-12);
}

TEST(DensityPenalty, DiagonalTraceFivePerUnitSegment) {
  LeapParams p = params_with_decoder(2, 2, affine_decoder(2, {2, 0, 0, 3}));
  Batch b = batch_of(2, {0, 1, 2, 3, 4}, 2);
  for (std::size_t reps : {1u, 3u}) {
    NoiseSpec ns{NoiseDistribution::rademacher, reps, 11};
    EXPECT_NEAR(density_penalty(b, p, ns, rk4(2)).item(), 2.0 * 4.0 * 5.0, 1e-12);
  }
  p.arch.lift = DensityLift::identity;
  EXPECT_NEAR(density_penalty(b, p, {}, rk4(2)).item(), 40.0, 1e-12);
}

TEST(DensityPenalty, OneVjpPerQuadratureNode) {
  Architecture arch = Architecture::defaults(TaskKind::classify, 2, 2, 6);
  LeapParams p = build_leap_params(arch, 2);
  Batch b = batch_of(4, {0, 1, 2, 3, 4, 5}, 2);
  for (std::size_t substeps : {1u, 3u}) {
    reset_vjp_count();
    density_penalty(b, p, {}, rk4(substeps));
    EXPECT_EQ(vjp_count(), 4 * substeps);
    SolveSpec euler = rk4(substeps);
    euler.method = SolverMethod::euler;
    reset_vjp_count();
    density_penalty(b, p, {}, euler);
    EXPECT_EQ(vjp_count(), substeps);
  }
}

TEST(DensityPenalty, SeedControlsTheDraw) {
  LeapParams p = params_with_decoder(2, 2, affine_decoder(2, {0, 1, 1, 0}));
  Batch b = batch_of(2, {0, 1, 2, 3, 4, 5, 6}, 2);
  NoiseSpec a{NoiseDistribution::rademacher, 1, 5};
  EXPECT_EQ(density_penalty(b, p, a, rk4(1)).item(), density_penalty(b, p, a, rk4(1)).item());
  bool differs = false;
  for (std::uint64_t s = 6; s < 12 && !differs; ++s) {
    NoiseSpec other{NoiseDistribution::rademacher, 1, s};
    differs = density_penalty(b, p, other, rk4(1)).item() != density_penalty(b, p, a, rk4(1)).item();
  }
  EXPECT_TRUE(differs);
}

TEST(DensityPenalty, GradientMatchesFiniteDifferences) {
  Architecture arch = Architecture::defaults(TaskKind::classify, 2, 2, 5);
  arch.h_dim = 3;
  LeapParams p = build_leap_params(arch, 9);
  Batch b = batch_of(3, {0, 1, 2.5, 3, 4}, 2);
  const NoiseSpec ns{NoiseDistribution::gaussian, 1, 21};
  const SolveSpec solver = rk4(2);
  Tensor penalty = density_penalty(b, p, ns, solver);
  GradMap g = backward(penalty);
  auto f = [&] {
    NoGradGuard guard;
    return density_penalty(b, p, ns, solver).item();
  };
  std::vector<Tensor> leaves = p.theta_f.weights();
  leaves.insert(leaves.end(), p.theta_f.biases().begin(), p.theta_f.biases().end());
  leaves.push_back(p.psi.weights()[0]);
  for (Tensor& leaf : leaves) {
    std::vector<double> fd = leap::testing::central_difference(leaf, f);
    EXPECT_LT(leap::testing::relative_error(g.at(leaf).data(), fd), 1e-3);
  }
}
