// Expectation-Maximization over the inlier/outlier assignment of loop
// closures. Inlier loops follow the same per-match Cauchy (or Gaussian) model
// as odometry; outlier loops are uniform. The mixture constant Theta is
// calibrated so that a loop as good as the median odometry constraint gets
// posterior p_hat.

#pragma once

#include <span>
#include <vector>

#include "emreg/graph.hpp"
#include "emreg/nlls.hpp"

namespace emreg {

/// A_ij = mean over matches of ln(1 + |T_i p - T_j q|^2 / sigma^2).
[[nodiscard]] double error_cauchy(std::span<const FeatureMatch> matches, const Pose& ti,
                                  const Pose& tj, double sigma);

/// B_ij = mean over matches of |T_i p - T_j q|^2.
[[nodiscard]] double error_gaussian(std::span<const FeatureMatch> matches, const Pose& ti,
                                    const Pose& tj);

/// Lower median (the lower of the two middle values for even counts).
[[nodiscard]] double lower_median(std::vector<double> values);

/// Solves Theta / (Theta + m_hat) = p_hat.
[[nodiscard]] double theta_for_median(double median_error, double p_hat);

/// Theta from m_{i,i+1} = exp(2 A_{i,i+1}) over all odometry constraints.
[[nodiscard]] double learn_theta_cauchy(const ProblemGraph& graph, std::span<const Pose> poses,
                                        double sigma, double p_hat);

[[nodiscard]] double learn_theta_gaussian(double epsilon, double p_hat,
                                          GaussianTheta reading = GaussianTheta::squared);

/// Theta / (Theta + exp(2A)), evaluated without overflow.
[[nodiscard]] double posterior_cauchy(double a, double theta);

/// Theta / (Theta + B^2).
[[nodiscard]] double posterior_gaussian(double b, double theta);

[[nodiscard]] PosteriorState e_step(const ProblemGraph& graph, std::span<const Pose> poses,
                                    double theta, const Hyperparams& params);

struct EmIteration {
  double theta = 0.0;
  /// M-step objective, posteriors fixed, before and after the solve.
  double objective_before = 0.0;
  double objective_after = 0.0;
  std::size_t inliers = 0;
  /// Largest |log(T_new ∘ T_old^-1)| over all poses.
  double max_pose_update = 0.0;
  SolverReport solver;
};

struct EmTrace {
  std::vector<EmIteration> iterations;
  bool converged = false;
};

struct EmResult {
  std::vector<Pose> poses;
  PosteriorState posterior;
  EmTrace trace;
};

/// Error raised by the M-step, tagged with the EM iteration it happened in.
class EmSolverError : public SolverError {
 public:
  EmSolverError(const SolverError& cause, int iteration);
  [[nodiscard]] int iteration() const { return iteration_; }

 private:
  int iteration_;
};

/// Starts from initialize_poses(graph). The returned posterior is recomputed
/// at the final poses.
[[nodiscard]] EmResult run_em(const ProblemGraph& graph, const Hyperparams& params,
                              const SolverOptions& solver = {});

/// Same, from caller-supplied starting poses.
[[nodiscard]] EmResult run_em(const ProblemGraph& graph, const Hyperparams& params,
                              std::vector<Pose> start, const SolverOptions& solver = {});

/// label = posterior > threshold.
[[nodiscard]] std::vector<bool> classify_loops(const PosteriorState& posterior,
                                               double threshold = 0.5);

}  // namespace emreg
