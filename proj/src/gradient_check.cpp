#include "emreg/gradient_check.hpp"

#include <algorithm>
#include <array>
#include <random>

namespace emreg {
namespace {

Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  const Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  return {q.normalized(), Vec3(u(rng), u(rng), u(rng))};
}

}  // namespace

double gradient_relative_error(const ResidualBlock& block, const Pose& pose_i, const Pose& pose_j,
                               double h) {
  ResidualBlock local = block;
  local.i = 0;
  local.j = 1;
  const std::array<Pose, 2> base{pose_i, pose_j};
  const BlockEvaluation analytic = residual_and_jacobian(local, base);

  Eigen::Matrix<double, 12, 1> ga;
  ga << analytic.grad_i, analytic.grad_j;
  Eigen::Matrix<double, 12, 1> gf;
  for (int k = 0; k < 12; ++k) {
    Vec6 step = Vec6::Zero();
    step(k % 6) = h;
    std::array<Pose, 2> plus = base;
    std::array<Pose, 2> minus = base;
    plus[k / 6] = retract(base[k / 6], Twist::from_vector(step));
    minus[k / 6] = retract(base[k / 6], Twist::from_vector(-step));
    const double fp = evaluate_objective(std::span<const ResidualBlock>(&local, 1), plus);
    const double fm = evaluate_objective(std::span<const ResidualBlock>(&local, 1), minus);
    gf(k) = (fp - fm) / (2.0 * h);
  }
  const double scale = std::max({ga.norm(), gf.norm(), 1e-6});
  return (ga - gf).norm() / scale;
}

GradientCheckResult check_gradients(Kernel kernel, std::size_t count, std::uint64_t seed,
                                    double tolerance) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> point(-3.0, 3.0);
  std::uniform_real_distribution<double> weight(0.01, 1.0);
  std::uniform_real_distribution<double> sigma(0.2, 2.0);

  GradientCheckResult out;
  for (std::size_t n = 0; n < count; ++n) {
    const Pose ti = random_pose(rng);
    const Pose tj = random_pose(rng);
    ResidualBlock block;
    block.i = 0;
    block.j = 1;
    block.match.p = Vec3(point(rng), point(rng), point(rng));
    block.match.q = Vec3(point(rng), point(rng), point(rng));
    block.weight = weight(rng);
    block.kernel = kernel;
    block.sigma = sigma(rng);
    const double err = gradient_relative_error(block, ti, tj);
    out.max_relative_error = std::max(out.max_relative_error, err);
    if (!(err < tolerance)) ++out.failures;
    ++out.blocks;
  }
  return out;
}

}  // namespace emreg
