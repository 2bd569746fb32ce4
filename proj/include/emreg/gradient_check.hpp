// Central finite-difference check of residual_and_jacobian on random blocks.

#pragma once

#include <cstdint>
#include <cstddef>

#include "emreg/nlls.hpp"

namespace emreg {

struct GradientCheckResult {
  std::size_t blocks = 0;
  double max_relative_error = 0.0;
  std::size_t failures = 0;
};

/// Relative error |g_analytic - g_fd| / max(|g_analytic|, |g_fd|, 1e-6) per
/// block, with step h on each of the 12 twist coordinates of the two poses.
[[nodiscard]] double gradient_relative_error(const ResidualBlock& block,
                                             const Pose& pose_i, const Pose& pose_j,
                                             double h = 1e-6);

/// `count` random blocks of the given kernel; a block fails above `tolerance`.
[[nodiscard]] GradientCheckResult check_gradients(Kernel kernel, std::size_t count,
                                                  std::uint64_t seed, double tolerance = 1e-5);

}  // namespace emreg
