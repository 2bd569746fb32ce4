#include "emreg/mixture_em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace emreg {
namespace {

double current_theta(const ProblemGraph& graph, std::span<const Pose> poses,
                     const Hyperparams& params) {
  if (params.mode == ErrorModel::gaussian) {
    return learn_theta_gaussian(params.epsilon, params.p_hat, params.gaussian_theta);
  }
  return learn_theta_cauchy(graph, poses, params.sigma, params.p_hat);
}

double max_update(std::span<const Pose> before, std::span<const Pose> after) {
  double out = 0.0;
  for (std::size_t k = 0; k < before.size(); ++k) {
    const Pose delta = compose(after[k], inverse(before[k]));
    out = std::max(out, log_map(delta).twist.vector().norm());
  }
  return out;
}

std::string tag(const SolverError& cause, int iteration) {
  std::ostringstream os;
  os << "EM iteration " << iteration << ": " << cause.what();
  return os.str();
}

}  // namespace

double error_cauchy(std::span<const FeatureMatch> matches, const Pose& ti, const Pose& tj,
                    double sigma) {
  const double s2 = sigma * sigma;
  double sum = 0.0;
  for (const auto& m : matches) {
    sum += std::log1p((transform_point(ti, m.p) - transform_point(tj, m.q)).squaredNorm() / s2);
  }
  return sum / static_cast<double>(matches.size());
}

double error_gaussian(std::span<const FeatureMatch> matches, const Pose& ti, const Pose& tj) {
  double sum = 0.0;
  for (const auto& m : matches) {
    sum += (transform_point(ti, m.p) - transform_point(tj, m.q)).squaredNorm();
  }
  return sum / static_cast<double>(matches.size());
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

double theta_for_median(double median_error, double p_hat) {
  return p_hat * median_error / (1.0 - p_hat);
}

double learn_theta_cauchy(const ProblemGraph& graph, std::span<const Pose> poses, double sigma,
                          double p_hat) {
  if (graph.odometry.empty()) {
    throw std::invalid_argument("learning Theta needs at least one odometry constraint");
  }
  std::vector<double> errors;
  errors.reserve(graph.odometry.size());
  for (const auto& odom : graph.odometry) {
    const double a = error_cauchy(odom.matches, poses[odom.i], poses[odom.i + 1], sigma);
    errors.push_back(std::exp(2.0 * a));
  }
  return theta_for_median(lower_median(std::move(errors)), p_hat);
}

double learn_theta_gaussian(double epsilon, double p_hat, GaussianTheta reading) {
  const double eps2 = epsilon * epsilon;
  const double m_hat = reading == GaussianTheta::squared ? eps2 * eps2 : eps2;
  return theta_for_median(m_hat, p_hat);
}

double posterior_cauchy(double a, double theta) {
  // 1 / (1 + exp(2A - ln Theta)); exp saturates to +inf, giving 0.
  return 1.0 / (1.0 + std::exp(2.0 * a - std::log(theta)));
}

double posterior_gaussian(double b, double theta) { return 1.0 / (1.0 + (b * b) / theta); }

PosteriorState e_step(const ProblemGraph& graph, std::span<const Pose> poses, double theta,
                      const Hyperparams& params) {
  if (!(theta > 0.0)) throw std::invalid_argument("Theta must be positive");
  PosteriorState out;
  out.theta = theta;
  out.posteriors.reserve(graph.loops.size());
  out.loop_errors.reserve(graph.loops.size());
  for (const auto& loop : graph.loops) {
    const Pose& ti = poses[loop.i];
    const Pose& tj = poses[loop.j];
    if (params.mode == ErrorModel::cauchy) {
      const double a = error_cauchy(loop.matches, ti, tj, params.sigma);
      out.loop_errors.push_back(a);
      out.posteriors.push_back(posterior_cauchy(a, theta));
    } else {
      const double b = error_gaussian(loop.matches, ti, tj);
      out.loop_errors.push_back(b);
      out.posteriors.push_back(posterior_gaussian(b, theta));
    }
  }
  return out;
}

EmSolverError::EmSolverError(const SolverError& cause, int iteration)
    : SolverError(cause.block(), tag(cause, iteration)), iteration_(iteration) {}

EmResult run_em(const ProblemGraph& graph, const Hyperparams& params,
                const SolverOptions& solver) {
  return run_em(graph, params, initialize_poses(graph), solver);
}

EmResult run_em(const ProblemGraph& graph, const Hyperparams& params, std::vector<Pose> start,
                const SolverOptions& solver) {
  check_hyperparams(params);
  if (auto violations = validate(graph); !violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  if (start.size() != graph.num_fragments) {
    throw std::invalid_argument("starting pose count does not match the graph");
  }

  EmResult result;
  result.poses = std::move(start);
  double theta = current_theta(graph, result.poses, params);
  double previous = std::numeric_limits<double>::quiet_NaN();

  for (int iter = 0; iter < params.max_em_iters; ++iter) {
    if (iter > 0 && !params.freeze_theta) theta = current_theta(graph, result.poses, params);
    const PosteriorState posterior = e_step(graph, result.poses, theta, params);
    const auto blocks = build_problem(graph, posterior, params);

    SolveResult solved;
    try {
      solved = solve(blocks, result.poses, 0, solver);
    } catch (const SolverError& e) {
      throw EmSolverError(e, iter);
    }

    EmIteration record;
    record.theta = theta;
    record.objective_before = solved.report.initial_objective;
    record.objective_after = solved.report.final_objective;
    record.inliers = static_cast<std::size_t>(
        std::count_if(posterior.posteriors.begin(), posterior.posteriors.end(),
                      [&](double p) { return p > params.inlier_threshold; }));
    record.max_pose_update = max_update(result.poses, solved.poses);
    record.solver = std::move(solved.report);
    result.poses = std::move(solved.poses);
    result.trace.iterations.push_back(std::move(record));

    const double current = result.trace.iterations.back().objective_after;
    if (graph.loops.empty()) {
      result.trace.converged = true;
      break;
    }
    if (iter > 0) {
      const double change = std::abs(current - previous) / std::max(std::abs(previous), 1e-300);
      if (change < params.em_tol) {
        result.trace.converged = true;
        break;
      }
    }
    previous = current;
  }

  if (!params.freeze_theta) theta = current_theta(graph, result.poses, params);
  result.posterior = e_step(graph, result.poses, theta, params);
  return result;
}

std::vector<bool> classify_loops(const PosteriorState& posterior, double threshold) {
  std::vector<bool> out;
  out.reserve(posterior.posteriors.size());
  for (double p : posterior.posteriors) out.push_back(p > threshold);
  return out;
}

}  // namespace emreg
