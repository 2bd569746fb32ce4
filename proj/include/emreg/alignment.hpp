// Closed-form absolute orientation (Horn's unit-quaternion method).

#pragma once

#include <optional>
#include <span>

#include "emreg/se3.hpp"

namespace emreg {

/// Least-squares rigid transform T minimising sum |T(source_k) - target_k|^2.
/// Returns nullopt for fewer than 3 pairs or (near-)collinear point sets.
[[nodiscard]] std::optional<Pose> align_points(std::span<const Vec3> source,
                                               std::span<const Vec3> target);

struct TrimmedAlignment {
  Pose transform;
  std::size_t inliers = 0;
};

/// align_points followed by `rounds` passes that drop pairs whose residual
/// exceeds `factor` times the median residual and refit on the survivors.
[[nodiscard]] std::optional<TrimmedAlignment> align_points_trimmed(
    std::span<const Vec3> source, std::span<const Vec3> target, int rounds = 3,
    double factor = 3.0);

}  // namespace emreg
