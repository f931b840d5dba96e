#pragma once

// Log-density penalty on the decoder NODE: the Hutchinson estimate of the
// Jacobian trace integrated along segments launched from the observations.

#include <cstdint>
#include <functional>
#include <random>
#include <string>

#include "leap/model.hpp"
#include "leap/tensor.hpp"

namespace leap {

enum class NoiseDistribution { rademacher, gaussian };

NoiseDistribution parse_noise(const std::string& name);
std::string noise_name(NoiseDistribution d);

struct NoiseSpec {
  NoiseDistribution distribution = NoiseDistribution::rademacher;
  std::size_t samples_per_segment = 1;
  std::uint64_t seed = 0;
};

Tensor sample_noise(NoiseDistribution d, std::size_t rows, std::size_t cols, std::mt19937_64& rng);

struct TraceEval {
  Tensor value;  // f(state)
  Tensor trace;  // [B, 1], eps_b^T (df/dstate)_b eps_b
};

// One field evaluation plus one vector-Jacobian product.
TraceEval eval_with_trace(const std::function<Tensor(const Tensor&)>& f, const Tensor& state,
                          const Tensor& noise);

// Sum over rows of eps^T (df/dstate) eps; a single row gives the plain estimate.
Tensor hutchinson_trace(const std::function<Tensor(const Tensor&)>& f, const Tensor& state,
                        const Tensor& noise);

// Sum over samples and knot intervals of the integrated trace estimate, each
// segment started from psi(X(t_{i-1})) with its own noise draw. Every
// quadrature node costs one vjp for the whole batch.
Tensor density_penalty(const Batch& batch, const LeapParams& params, const NoiseSpec& noise,
                       const SolveSpec& solver);

}  // namespace leap
