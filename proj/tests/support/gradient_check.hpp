#pragma once

// Finite-difference check of total_loss over every parameter tensor.

#include <string>
#include <vector>

#include "finite_diff.hpp"
#include "leap/training.hpp"

namespace leap::testing {

struct GradientCheck {
  double worst = 0.0;
  std::string worst_name;
};

// Largest per-tensor relative error between the reverse-mode gradient and
// central differences, with the noise seed held fixed. The small default
// step keeps perturbations from crossing ReLU kinks.
inline GradientCheck check_total_loss_gradient(const Batch& batch, const ModelParams& params,
                                               const TrainConfig& config, std::uint64_t noise_seed,
                                               double step = 1e-6) {
  GradMap g = backward(total_loss(batch, params, config, noise_seed).total);
  auto f = [&] {
    NoGradGuard guard;
    return total_loss(batch, params, config, noise_seed).total.item();
  };
  GradientCheck out;
  for (auto& [name, leaf] : params.named_parameters()) {
    Tensor t = leaf;
    std::vector<double> fd = central_difference(t, f, step);
    const double err = relative_error(g.at(t).data(), fd);
    if (err > out.worst || out.worst_name.empty()) {
      out.worst = std::max(out.worst, err);
      out.worst_name = name;
    }
  }
  return out;
}

}  // namespace leap::testing
