// M-step engine: weighted robust least squares over all fragment poses.
//
// Every feature match contributes w * rho(|T_i p - T_j q|^2) with
//   cauchy_log: rho(s) = ln(1 + s / sigma^2)
//   squared:    rho(s) = s
// Poses are updated as T <- exp(delta) ∘ T (see retract), and gradients are
// taken with respect to that left perturbation.

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "emreg/graph.hpp"
#include "emreg/se3.hpp"

namespace emreg {

enum class Kernel { cauchy_log, squared };

struct ResidualBlock {
  std::size_t i = 0;
  std::size_t j = 0;
  FeatureMatch match;
  double weight = 0.0;
  Kernel kernel = Kernel::cauchy_log;
  double sigma = 1.0;  // cauchy_log only
};

/// One block per match: odometry with weight 1/|X|, loops with P_ij/|Y|.
[[nodiscard]] std::vector<ResidualBlock> build_problem(const ProblemGraph& graph,
                                                       const PosteriorState& posterior,
                                                       const Hyperparams& params);

struct BlockEvaluation {
  double cost = 0.0;
  Vec6 grad_i = Vec6::Zero();  // d cost / d delta_i
  Vec6 grad_j = Vec6::Zero();  // d cost / d delta_j
};

[[nodiscard]] BlockEvaluation residual_and_jacobian(const ResidualBlock& block,
                                                    std::span<const Pose> poses);

[[nodiscard]] double evaluate_objective(std::span<const ResidualBlock> blocks,
                                        std::span<const Pose> poses);

struct SolverOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
  double relative_tolerance = 1e-10;
  double initial_damping = 1e-4;
  double min_damping = 1e-12;
  double max_damping = 1e8;
};

enum class Termination { gradient, relative_decrease, max_iterations, stalled };

[[nodiscard]] const char* to_string(Termination t);

struct SolverReport {
  int iterations = 0;
  int accepted_steps = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  Termination termination = Termination::max_iterations;
  /// Max-abs gradient component over the free poses at exit.
  double max_gradient = 0.0;
  /// Objective after each accepted step, starting with the initial value.
  std::vector<double> objective_history;
};

struct SolveResult {
  std::vector<Pose> poses;
  SolverReport report;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(std::size_t block, const std::string& what)
      : std::runtime_error(what), block_(block) {}
  [[nodiscard]] std::size_t block() const { return block_; }

 private:
  std::size_t block_;
};

/// Levenberg-Marquardt with the pose at `gauge` held fixed. Throws
/// SolverError when a block evaluates to a non-finite value.
[[nodiscard]] SolveResult solve(std::span<const ResidualBlock> blocks,
                                std::vector<Pose> initial, std::size_t gauge,
                                const SolverOptions& options = {});

}  // namespace emreg
