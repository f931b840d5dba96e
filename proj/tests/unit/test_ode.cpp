#include "leap/ode.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "expm.hpp"
#include "finite_diff.hpp"
#include "leap/errors.hpp"

using namespace leap;

namespace {

SolveSpec spec_for(SolverMethod m, std::vector<double> grid, std::size_t substeps) {
  SolveSpec s;
  s.method = m;
  s.t_grid = std::move(grid);
  s.substeps = substeps;
  return s;
}

double decay_error(SolverMethod m, double h) {
  const auto steps = static_cast<std::size_t>(std::lround(1.0 / h));
  auto traj = solve_ivp([](const Tensor& z, double) { return neg(z); }, Tensor::scalar(1.0),
                        spec_for(m, {0.0, 1.0}, steps));
  return std::abs(traj.back().item() - std::exp(-1.0));
}

}  // namespace

TEST(SolveIvp, EulerDecayHandComputed) {
  auto traj = solve_ivp([](const Tensor& z, double) { return neg(z); }, Tensor::scalar(1.0),
                        spec_for(SolverMethod::euler, {0.0, 0.5, 1.0}, 1));
  ASSERT_EQ(traj.size(), 3u);
  EXPECT_DOUBLE_EQ(traj[0].item(), 1.0);
  EXPECT_DOUBLE_EQ(traj[2].item(), 0.25);
}

TEST(SolveIvp, Rk4SingleStepTruncatedExponential) {
  auto traj = solve_ivp([](const Tensor& z, double) { return z; }, Tensor::scalar(1.0),
                        spec_for(SolverMethod::rk4, {0.0, 1.0}, 1));
  EXPECT_NEAR(traj.back().item(), 1.0 + 1.0 + 0.5 + 1.0 / 6.0 + 1.0 / 24.0, 1e-15);
}

TEST(SolveIvp, ZeroFieldKeepsState) {
  Tensor z0 = Tensor::from({1, 3}, {0.5, -2.0, 3.0});
  auto traj = solve_ivp([](const Tensor& z, double) { return Tensor::zeros(z.shape()); }, z0,
                        spec_for(SolverMethod::rk4, uniform_grid(0, 5, 5), 3));
  for (const Tensor& z : traj) EXPECT_EQ(z.to_vector(), z0.to_vector());
}

TEST(SolveIvp, ConvergenceOrder) {
  const double e1 = decay_error(SolverMethod::euler, 0.01), e2 = decay_error(SolverMethod::euler, 0.005);
  EXPECT_GE(e1 / e2, 1.8);
  EXPECT_LE(e1 / e2, 2.2);
  const double r1 = decay_error(SolverMethod::rk4, 0.1), r2 = decay_error(SolverMethod::rk4, 0.05);
  EXPECT_GE(r1 / r2, 12.0);
  EXPECT_LE(r1 / r2, 20.0);
}

TEST(SolveIvp, LinearSystemAgainstMatrixExponential) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    leap::testing::Mat b(3, std::vector<double>(3)), c(3, std::vector<double>(3)), a(3, std::vector<double>(3));
    for (auto& r : b) for (double& v : r) v = u(rng);
    for (auto& r : c) for (double& v : r) v = u(rng);
    // -(B^T B + I/2) + (C - C^T)/2 has eigenvalues with negative real part
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double btb = 0;
        for (int k = 0; k < 3; ++k) btb += b[k][i] * b[k][j];
        a[i][j] = -btb - (i == j ? 0.5 : 0.0) + 0.5 * (c[i][j] - c[j][i]);
      }
    std::vector<double> at_flat;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) at_flat.push_back(a[j][i]);
    Tensor a_t = Tensor::from({3, 3}, at_flat);
    std::vector<double> z0{u(rng), u(rng), u(rng)};
    auto traj = solve_ivp([&](const Tensor& z, double) { return matmul(z, a_t); },
                          Tensor::from({1, 3}, z0), spec_for(SolverMethod::rk4, {0.0, 1.0}, 1000));
    leap::testing::Mat e = leap::testing::expm(a);
    for (int i = 0; i < 3; ++i) {
      double expected = 0;
      for (int j = 0; j < 3; ++j) expected += e[i][j] * z0[j];
      EXPECT_LT(std::abs(traj.back().at(i) - expected), 1e-9);
    }
  }
}

TEST(SolveIvp, ContinuousInInitialCondition) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w1(4 * 8), w2(8 * 4);
  for (double& v : w1) v = u(rng);
  for (double& v : w2) v = u(rng);
  Tensor a = Tensor::from({4, 8}, w1), b = Tensor::from({8, 4}, w2);
  TensorField field = [&](const Tensor& z, double) { return tanh(matmul(tanh(matmul(z, a)), b)); };
  SolveSpec spec = spec_for(SolverMethod::rk4, uniform_grid(0, 2, 4), 4);
  Tensor z0 = Tensor::from({1, 4}, {0.1, -0.4, 0.3, 0.9});
  const Tensor base = solve_ivp(field, z0, spec).back();
  auto gap = [&](double delta) {
    Tensor zp = add(z0, Tensor::full({1, 4}, delta));
    Tensor end = solve_ivp(field, zp, spec).back();
    double s = 0;
    for (std::size_t i = 0; i < 4; ++i) s += std::pow(end.at(i) - base.at(i), 2);
    return std::sqrt(s);
  };
  const double g1 = gap(1e-3), g2 = gap(1e-4), g3 = gap(1e-5);
  EXPECT_LT(g3, g2);
  EXPECT_LT(g2, g1);
  EXPECT_NEAR(g1 / g2, 10.0, 0.1);
  EXPECT_NEAR(g2 / g3, 10.0, 0.01);
}

TEST(SolveIvp, DivergenceReportsTime) {
  SolveSpec spec = spec_for(SolverMethod::euler, {0.0, 50.0}, 500);
  try {
    solve_ivp([](const Tensor& z, double) { return mul(z, z); }, Tensor::scalar(1.0), spec);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.time(), 0.0);
    EXPECT_LT(e.time(), 50.0);
  }
}

TEST(SolveIvp, InvalidGrid) {
  EXPECT_THROW(solve_ivp([](const Tensor& z, double) { return z; }, Tensor::scalar(1.0),
                         spec_for(SolverMethod::rk4, {0.0, 0.0}, 1)),
               ContractError);
  EXPECT_THROW(solve_ivp([](const Tensor& z, double) { return z; }, Tensor::scalar(1.0),
                         spec_for(SolverMethod::rk4, {0.0, 1.0}, 0)),
               ContractError);
}

TEST(SolveIvp, GradientThroughUnrolledSteps) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> wv(9), zv(3);
  for (double& v : wv) v = u(rng);
  for (double& v : zv) v = u(rng);
  Tensor w = Tensor::parameter({3, 3}, wv);
  Tensor z0 = Tensor::parameter({1, 3}, zv);
  SolveSpec spec = spec_for(SolverMethod::rk4, uniform_grid(0, 1, 2), 3);
  auto loss = [&] {
    auto traj = solve_ivp([&](const Tensor& z, double t) {
      return tanh(add_scalar(matmul(z, w), t));
    }, z0, spec);
    return sum(square(traj.back()));
  };
  GradMap g = backward(loss());
  auto fd_w = leap::testing::central_difference(w, [&] { NoGradGuard ng; return loss().item(); });
  auto fd_z = leap::testing::central_difference(z0, [&] { NoGradGuard ng; return loss().item(); });
  EXPECT_LT(leap::testing::relative_error(g.at(w).data(), fd_w), 1e-6);
  EXPECT_LT(leap::testing::relative_error(g.at(z0).data(), fd_z), 1e-6);
}

TEST(Quadrature, UnitIntegrandGivesIntervalLength) {
  auto sol = solve_with_quadrature([](const Tensor& z, double) { return neg(z); },
                                   [](const Tensor&, double) { return Tensor::scalar(1.0); },
                                   Tensor::scalar(1.0), spec_for(SolverMethod::rk4, {0.0, 1.0}, 7));
  EXPECT_NEAR(sol.integral.item(), 1.0, 1e-12);
}

TEST(Quadrature, ConstantIntegrandOverZeroField) {
  const double c = 2.5;
  auto sol = solve_with_quadrature([](const Tensor& z, double) { return Tensor::zeros(z.shape()); },
                                   [c](const Tensor& z, double) { return scale(z, c); },
                                   Tensor::scalar(1.0), spec_for(SolverMethod::euler, {1.0, 3.0, 4.0}, 2));
  EXPECT_NEAR(sol.integral.item(), c * 3.0, 1e-12);
}

TEST(Quadrature, DecayIntegralClosedForm) {
  auto sol = solve_with_quadrature([](const Tensor& z, double) { return neg(z); },
                                   [](const Tensor& z, double) { return z; }, Tensor::scalar(1.0),
                                   spec_for(SolverMethod::rk4, {0.0, 1.0}, 100));
  EXPECT_NEAR(sol.integral.item(), 1.0 - std::exp(-1.0), 1e-6);
  EXPECT_NEAR(sol.trajectory.back()[0].item(), std::exp(-1.0), 1e-9);
}
