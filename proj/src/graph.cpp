#include "emreg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "emreg/alignment.hpp"

namespace emreg {
namespace {

bool finite(const Vec3& v) { return v.allFinite(); }

bool finite(const std::vector<FeatureMatch>& matches) {
  return std::all_of(matches.begin(), matches.end(),
                     [](const FeatureMatch& m) { return finite(m.p) && finite(m.q); });
}

std::string summarize(const std::vector<Violation>& violations) {
  std::ostringstream os;
  os << "invalid problem graph:";
  for (const auto& v : violations) os << "\n  " << describe(v);
  return os.str();
}

}  // namespace

bool ProblemGraph::has_oracle_labels() const {
  return !loops.empty() && std::all_of(loops.begin(), loops.end(), [](const auto& l) {
    return l.oracle_inlier.has_value();
  });
}

void check_hyperparams(const Hyperparams& params) {
  if (!(params.sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (!(params.p_hat > 0.0 && params.p_hat < 1.0))
    throw std::invalid_argument("p_hat must lie in (0, 1)");
  if (!(params.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (params.max_em_iters < 1) throw std::invalid_argument("max_em_iters must be at least 1");
  if (!(params.em_tol >= 0.0)) throw std::invalid_argument("em_tol must be non-negative");
}

std::string describe(const Violation& v) {
  std::ostringstream os;
  switch (v.kind) {
    case ViolationKind::no_fragments:
      os << "graph has no fragments";
      break;
    case ViolationKind::missing_odometry:
      os << "missing odometry constraint " << v.i << " -> " << v.i + 1;
      break;
    case ViolationKind::duplicate_odometry:
      os << "duplicate odometry constraint " << v.i << " -> " << v.i + 1;
      break;
    case ViolationKind::odometry_out_of_range:
      os << "odometry constraint " << v.i << " -> " << v.i + 1 << " exceeds the fragment count";
      break;
    case ViolationKind::empty_matches:
      os << "constraint " << v.i << " - " << v.j << " has no matches";
      break;
    case ViolationKind::non_finite:
      os << "constraint " << v.i << " - " << v.j << " has non-finite coordinates";
      break;
    case ViolationKind::loop_out_of_range:
      os << "loop " << v.i << " - " << v.j << " references a fragment out of range";
      break;
    case ViolationKind::loop_not_canonical:
      os << "loop " << v.i << " - " << v.j << " must list the smaller index first";
      break;
    case ViolationKind::loop_too_short:
      os << "loop " << v.i << " - " << v.j << " connects fragments less than 2 apart";
      break;
    case ViolationKind::duplicate_loop:
      os << "duplicate loop " << v.i << " - " << v.j;
      break;
    case ViolationKind::pose_count_mismatch:
      os << "pose list has " << v.i << " entries for " << v.j << " fragments";
      break;
  }
  return os.str();
}

std::vector<Violation> validate(const ProblemGraph& graph) {
  std::vector<Violation> out;
  const std::size_t n = graph.num_fragments;
  if (n == 0) {
    out.push_back({ViolationKind::no_fragments});
    return out;
  }

  std::vector<int> odom_count(n, 0);
  for (const auto& odom : graph.odometry) {
    if (odom.i + 1 >= n) {
      out.push_back({ViolationKind::odometry_out_of_range, odom.i, odom.i + 1});
      continue;
    }
    if (++odom_count[odom.i] == 2) {
      out.push_back({ViolationKind::duplicate_odometry, odom.i, odom.i + 1});
    }
    if (odom.matches.empty()) out.push_back({ViolationKind::empty_matches, odom.i, odom.i + 1});
    if (!finite(odom.matches)) out.push_back({ViolationKind::non_finite, odom.i, odom.i + 1});
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (odom_count[i] == 0) out.push_back({ViolationKind::missing_odometry, i, i + 1});
  }

  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& loop : graph.loops) {
    if (loop.i >= n || loop.j >= n) {
      out.push_back({ViolationKind::loop_out_of_range, loop.i, loop.j});
    } else if (loop.i >= loop.j) {
      out.push_back({ViolationKind::loop_not_canonical, loop.i, loop.j});
    } else if (loop.j - loop.i < 2) {
      out.push_back({ViolationKind::loop_too_short, loop.i, loop.j});
    }
    if (!seen.emplace(std::min(loop.i, loop.j), std::max(loop.i, loop.j)).second) {
      out.push_back({ViolationKind::duplicate_loop, loop.i, loop.j});
    }
    if (loop.matches.empty()) out.push_back({ViolationKind::empty_matches, loop.i, loop.j});
    if (!finite(loop.matches)) out.push_back({ViolationKind::non_finite, loop.i, loop.j});
  }

  for (const auto* poses : {&graph.initial_poses, &graph.ground_truth}) {
    if (poses->has_value() && (*poses)->size() != n) {
      out.push_back({ViolationKind::pose_count_mismatch, (*poses)->size(), n});
    }
  }
  return out;
}

ValidationError::ValidationError(std::vector<Violation> violations)
    : std::runtime_error(summarize(violations)), violations_(std::move(violations)) {}

std::vector<const OdometryConstraint*> odometry_by_index(const ProblemGraph& graph) {
  std::vector<const OdometryConstraint*> out(graph.num_fragments > 0 ? graph.num_fragments - 1 : 0,
                                             nullptr);
  for (const auto& odom : graph.odometry) {
    if (odom.i < out.size()) out[odom.i] = &odom;
  }
  return out;
}

Pose odometry_relative_pose(const OdometryConstraint& odometry) {
  // T_i p = T_{i+1} q  =>  p = rel q.
  std::vector<Vec3> source;
  std::vector<Vec3> target;
  source.reserve(odometry.matches.size());
  target.reserve(odometry.matches.size());
  for (const auto& m : odometry.matches) {
    source.push_back(m.q);
    target.push_back(m.p);
  }
  const auto fit = align_points_trimmed(source, target);
  if (!fit) {
    std::ostringstream os;
    os << "odometry constraint " << odometry.i << " -> " << odometry.i + 1
       << ": fewer than 3 non-degenerate matches after trimming";
    throw AlignmentError(odometry.i, os.str());
  }
  return fit->transform;
}

std::vector<Pose> initialize_poses(const ProblemGraph& graph) {
  if (auto violations = validate(graph); !violations.empty()) {
    throw ValidationError(std::move(violations));
  }
  if (graph.initial_poses) return *graph.initial_poses;

  std::vector<Pose> poses(graph.num_fragments);
  const auto odometry = odometry_by_index(graph);
  for (std::size_t i = 0; i + 1 < graph.num_fragments; ++i) {
    poses[i + 1] = compose(poses[i], odometry_relative_pose(*odometry[i]));
  }
  return poses;
}

}  // namespace emreg
