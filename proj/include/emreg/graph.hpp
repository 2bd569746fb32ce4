// Problem data model: fragments linked by odometry and loop-closure
// feature-match sets, plus the hyperparameters and posterior state of the EM.

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "emreg/se3.hpp"

namespace emreg {

/// p lives in fragment i's frame, q in fragment j's frame.
struct FeatureMatch {
  Vec3 p = Vec3::Zero();
  Vec3 q = Vec3::Zero();
  friend bool operator==(const FeatureMatch& a, const FeatureMatch& b) {
    return a.p == b.p && a.q == b.q;
  }
};

/// Matches between fragment i and i + 1.
struct OdometryConstraint {
  std::size_t i = 0;
  std::vector<FeatureMatch> matches;
  friend bool operator==(const OdometryConstraint&, const OdometryConstraint&) = default;
};

/// Matches between non-consecutive fragments i < j. `oracle_inlier` is the
/// ground-truth label when the scenario provides one.
struct LoopClosureConstraint {
  std::size_t i = 0;
  std::size_t j = 0;
  std::vector<FeatureMatch> matches;
  std::optional<bool> oracle_inlier;
  friend bool operator==(const LoopClosureConstraint&, const LoopClosureConstraint&) = default;
};

struct ProblemGraph {
  std::size_t num_fragments = 0;
  std::optional<std::vector<Pose>> initial_poses;
  std::vector<OdometryConstraint> odometry;
  /// Sorted by (i, j).
  std::vector<LoopClosureConstraint> loops;
  std::optional<std::vector<Pose>> ground_truth;

  [[nodiscard]] bool has_oracle_labels() const;
  friend bool operator==(const ProblemGraph&, const ProblemGraph&) = default;
};

enum class ErrorModel { cauchy, gaussian };

/// How the Gaussian-mode mixture constant is calibrated from epsilon.
/// `squared` treats the median odometry error as (eps^2)^2, matching the
/// B^2 error term; `literal` uses eps^2 directly.
enum class GaussianTheta { squared, literal };

struct Hyperparams {
  double sigma = 0.5;
  double p_hat = 0.9;
  double epsilon = 0.05;
  ErrorModel mode = ErrorModel::cauchy;
  int max_em_iters = 50;
  double em_tol = 1e-6;
  double inlier_threshold = 0.5;
  GaussianTheta gaussian_theta = GaussianTheta::squared;
  /// Keep the Theta learned at the initial poses for every E-step.
  bool freeze_theta = false;
};

/// Throws std::invalid_argument when sigma, p_hat or epsilon are out of range.
void check_hyperparams(const Hyperparams& params);

struct PosteriorState {
  double theta = 1.0;
  /// Inlier posterior per loop, same order as ProblemGraph::loops.
  std::vector<double> posteriors;
  /// A_ij (cauchy) or B_ij (gaussian) at the poses the posteriors were computed at.
  std::vector<double> loop_errors;
};

enum class ViolationKind {
  no_fragments,
  missing_odometry,
  duplicate_odometry,
  odometry_out_of_range,
  empty_matches,
  non_finite,
  loop_out_of_range,
  loop_not_canonical,
  loop_too_short,
  duplicate_loop,
  pose_count_mismatch,
};

struct Violation {
  ViolationKind kind;
  std::size_t i = 0;
  std::size_t j = 0;
  friend bool operator==(const Violation&, const Violation&) = default;
};

[[nodiscard]] std::string describe(const Violation& v);

/// Empty iff the graph satisfies every structural invariant.
[[nodiscard]] std::vector<Violation> validate(const ProblemGraph& graph);

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  [[nodiscard]] const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

class AlignmentError : public std::runtime_error {
 public:
  AlignmentError(std::size_t odometry_index, const std::string& what)
      : std::runtime_error(what), index_(odometry_index) {}
  [[nodiscard]] std::size_t odometry_index() const { return index_; }

 private:
  std::size_t index_;
};

/// INIT poses when the graph carries them, otherwise T_0 = I chained through
/// trimmed closed-form alignments of each odometry match set.
/// Throws ValidationError on an invalid graph and AlignmentError when a match
/// set is degenerate.
[[nodiscard]] std::vector<Pose> initialize_poses(const ProblemGraph& graph);

/// Relative pose rel with T_{i+1} = T_i ∘ rel estimated from one odometry set.
[[nodiscard]] Pose odometry_relative_pose(const OdometryConstraint& odometry);

/// Odometry constraints indexed by i; requires a valid graph.
[[nodiscard]] std::vector<const OdometryConstraint*> odometry_by_index(const ProblemGraph& graph);

}  // namespace emreg
