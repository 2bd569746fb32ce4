#include "emreg/nlls.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <utility>

namespace emreg {
namespace {

using Mat36 = Eigen::Matrix<double, 3, 6>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct Linearization {
  double cost = 0.0;
  Vec3 residual = Vec3::Zero();
  Mat36 jac_i = Mat36::Zero();
  Mat36 jac_j = Mat36::Zero();
  double gn_weight = 0.0;  // 2 w rho'(s)
};

Linearization linearize(const ResidualBlock& b, std::span<const Pose> poses) {
  const Vec3 x = transform_point(poses[b.i], b.match.p);
  const Vec3 y = transform_point(poses[b.j], b.match.q);
  Linearization out;
  out.residual = x - y;
  const double s = out.residual.squaredNorm();
  double drho;
  if (b.kernel == Kernel::cauchy_log) {
    const double s2 = b.sigma * b.sigma;
    out.cost = b.weight * std::log1p(s / s2);
    drho = 1.0 / (s2 + s);
  } else {
    out.cost = b.weight * s;
    drho = 1.0;
  }
  out.gn_weight = 2.0 * b.weight * drho;
  // d(exp(delta) x)/d delta at 0 is [-[x]x, I].
  out.jac_i.leftCols<3>() = -skew(x);
  out.jac_i.rightCols<3>() = Mat3::Identity();
  out.jac_j.leftCols<3>() = skew(y);
  out.jac_j.rightCols<3>() = -Mat3::Identity();
  return out;
}

std::string block_name(std::size_t k, const ResidualBlock& b) {
  std::ostringstream os;
  os << "residual block " << k << " (fragments " << b.i << " - " << b.j
     << ") evaluated to a non-finite value";
  return os.str();
}

class System {
 public:
  System(std::size_t num_poses, std::size_t gauge) : gauge_(num_poses, -1) {
    int next = 0;
    for (std::size_t k = 0; k < num_poses; ++k) {
      if (k != gauge) gauge_[k] = next++;
    }
    dim_ = 6 * next;
  }

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] int var(std::size_t pose) const { return gauge_[pose]; }

  // Returns the objective; fills gradient and the kernel-reweighted
  // Gauss-Newton Hessian.
  double assemble(std::span<const ResidualBlock> blocks, std::span<const Pose> poses,
                  Eigen::VectorXd& gradient, Eigen::SparseMatrix<double>& hessian) const {
    gradient.setZero(dim_);
    std::map<std::pair<int, int>, Mat6> tiles;
    double cost = 0.0;
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const ResidualBlock& b = blocks[k];
      const Linearization lin = linearize(b, poses);
      if (!std::isfinite(lin.cost) || !lin.residual.allFinite() || !lin.jac_i.allFinite() ||
          !lin.jac_j.allFinite()) {
        throw SolverError(k, block_name(k, b));
      }
      cost += lin.cost;
      if (b.weight == 0.0) continue;
      const int vi = var(b.i);
      const int vj = var(b.j);
      const double c = lin.gn_weight;
      if (vi >= 0) {
        gradient.segment<6>(6 * vi) += c * lin.jac_i.transpose() * lin.residual;
        add(tiles, vi, vi, c * lin.jac_i.transpose() * lin.jac_i);
      }
      if (vj >= 0) {
        gradient.segment<6>(6 * vj) += c * lin.jac_j.transpose() * lin.residual;
        add(tiles, vj, vj, c * lin.jac_j.transpose() * lin.jac_j);
      }
      if (vi >= 0 && vj >= 0) {
        const Mat6 cross = c * lin.jac_i.transpose() * lin.jac_j;
        add(tiles, vi, vj, cross);
        add(tiles, vj, vi, cross.transpose());
      }
    }
    to_sparse(tiles, hessian);
    return cost;
  }

 private:
  void to_sparse(const std::map<std::pair<int, int>, Mat6>& tiles,
                 Eigen::SparseMatrix<double>& out) const {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(tiles.size() * 36);
    for (const auto& [key, tile] : tiles) {
      for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) {
          triplets.emplace_back(6 * key.first + r, 6 * key.second + c, tile(r, c));
        }
      }
    }
    out.resize(dim_, dim_);
    out.setFromTriplets(triplets.begin(), triplets.end());
  }

  static void add(std::map<std::pair<int, int>, Mat6>& tiles, int a, int b, const Mat6& m) {
    auto [it, inserted] = tiles.try_emplace({a, b}, m);
    if (!inserted) it->second += m;
  }

  std::vector<int> gauge_;
  int dim_ = 0;
};

// Maps a body-frame twist to the left-chart twist: exp(Ad_T e) T = T exp(e).
Mat6 adjoint(const Pose& t) {
  const Mat3 r = t.rotation().toRotationMatrix();
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = r;
  out.bottomLeftCorner<3, 3>() = skew(t.translation()) * r;
  out.bottomRightCorner<3, 3>() = r;
  return out;
}

// Marquardt scaling taken in each pose's body frame, so a common rigid
// transform of all poses leaves the damped step unchanged.
Eigen::SparseMatrix<double> damping_metric(const Eigen::SparseMatrix<double>& hessian,
                                           std::span<const Pose> poses, const System& system) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const int v = system.var(k);
    if (v < 0) continue;
    const Mat6 ad = adjoint(poses[k]);
    const Mat6 inv = ad.inverse();
    const Mat6 body = ad.transpose() * Mat6(hessian.block(6 * v, 6 * v, 6, 6)) * ad;
    const Mat6 tile =
        inv.transpose() * body.diagonal().cwiseMax(1e-9).asDiagonal() * inv;
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) triplets.emplace_back(6 * v + r, 6 * v + c, tile(r, c));
    }
  }
  Eigen::SparseMatrix<double> out(system.dim(), system.dim());
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

std::vector<Pose> apply_step(std::span<const Pose> poses, const System& system,
                             const Eigen::VectorXd& step) {
  std::vector<Pose> out(poses.begin(), poses.end());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const int v = system.var(k);
    if (v >= 0) out[k] = retract(out[k], Twist::from_vector(step.segment<6>(6 * v)));
  }
  return out;
}

}  // namespace

std::vector<ResidualBlock> build_problem(const ProblemGraph& graph, const PosteriorState& posterior,
                                         const Hyperparams& params) {
  if (posterior.posteriors.size() != graph.loops.size()) {
    throw std::invalid_argument("posterior count does not match the number of loops");
  }
  const Kernel kernel = params.mode == ErrorModel::cauchy ? Kernel::cauchy_log : Kernel::squared;

  std::vector<ResidualBlock> blocks;
  std::size_t total = 0;
  for (const auto& o : graph.odometry) total += o.matches.size();
  for (const auto& l : graph.loops) total += l.matches.size();
  blocks.reserve(total);

  for (const auto& odom : graph.odometry) {
    const double w = 1.0 / static_cast<double>(odom.matches.size());
    for (const auto& m : odom.matches) {
      blocks.push_back({odom.i, odom.i + 1, m, w, kernel, params.sigma});
    }
  }
  for (std::size_t k = 0; k < graph.loops.size(); ++k) {
    const auto& loop = graph.loops[k];
    const double w = posterior.posteriors[k] / static_cast<double>(loop.matches.size());
    for (const auto& m : loop.matches) {
      blocks.push_back({loop.i, loop.j, m, w, kernel, params.sigma});
    }
  }
  return blocks;
}

BlockEvaluation residual_and_jacobian(const ResidualBlock& block, std::span<const Pose> poses) {
  const Linearization lin = linearize(block, poses);
  BlockEvaluation out;
  out.cost = lin.cost;
  out.grad_i = lin.gn_weight * lin.jac_i.transpose() * lin.residual;
  out.grad_j = lin.gn_weight * lin.jac_j.transpose() * lin.residual;
  return out;
}

double evaluate_objective(std::span<const ResidualBlock> blocks, std::span<const Pose> poses) {
  double total = 0.0;
  for (const auto& b : blocks) {
    const Vec3 r = transform_point(poses[b.i], b.match.p) - transform_point(poses[b.j], b.match.q);
    const double s = r.squaredNorm();
    total += b.kernel == Kernel::cauchy_log ? b.weight * std::log1p(s / (b.sigma * b.sigma))
                                            : b.weight * s;
  }
  return total;
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::gradient:
      return "gradient";
    case Termination::relative_decrease:
      return "relative_decrease";
    case Termination::max_iterations:
      return "max_iterations";
    case Termination::stalled:
      return "stalled";
  }
  return "unknown";
}

SolveResult solve(std::span<const ResidualBlock> blocks, std::vector<Pose> initial,
                  std::size_t gauge, const SolverOptions& options) {
  for (const auto& b : blocks) {
    if (b.i >= initial.size() || b.j >= initial.size()) {
      throw std::invalid_argument("residual block references a pose out of range");
    }
  }
  const System system(initial.size(), gauge);

  SolveResult result;
  result.poses = std::move(initial);
  SolverReport& report = result.report;

  Eigen::VectorXd gradient;
  Eigen::SparseMatrix<double> hessian;
  double cost = system.assemble(blocks, result.poses, gradient, hessian);
  report.initial_objective = cost;
  report.objective_history.push_back(cost);

  if (system.dim() == 0) {
    report.final_objective = cost;
    report.termination = Termination::gradient;
    return result;
  }

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor;
  bool pattern_ready = false;
  double damping = options.initial_damping;
  report.termination = Termination::max_iterations;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    report.max_gradient = gradient.lpNorm<Eigen::Infinity>();
    if (report.max_gradient < options.gradient_tolerance) {
      report.termination = Termination::gradient;
      break;
    }
    report.iterations = iter + 1;

    const Eigen::SparseMatrix<double> metric = damping_metric(hessian, result.poses, system);
    bool accepted = false;
    double new_cost = cost;
    std::vector<Pose> candidate;
    while (!accepted) {
      const Eigen::SparseMatrix<double> damped = hessian + damping * metric;
      if (!pattern_ready) {
        factor.analyzePattern(damped);
        pattern_ready = true;
      }
      factor.factorize(damped);
      if (factor.info() == Eigen::Success) {
        const Eigen::VectorXd step = factor.solve(-gradient);
        if (step.allFinite()) {
          candidate = apply_step(result.poses, system, step);
          new_cost = evaluate_objective(blocks, candidate);
          accepted = std::isfinite(new_cost) && new_cost < cost;
        }
      }
      if (!accepted) {
        damping *= 10.0;
        if (damping > options.max_damping) break;
      }
    }
    if (!accepted) {
      report.termination = Termination::stalled;
      break;
    }

    damping = std::max(damping * 0.5, options.min_damping);
    const double decrease = (cost - new_cost) / std::max(std::abs(cost), 1e-300);
    result.poses = std::move(candidate);
    ++report.accepted_steps;
    report.objective_history.push_back(new_cost);
    cost = system.assemble(blocks, result.poses, gradient, hessian);
    if (decrease < options.relative_tolerance) {
      report.termination = Termination::relative_decrease;
      break;
    }
  }
  report.max_gradient = gradient.lpNorm<Eigen::Infinity>();
  report.final_objective = cost;
  return result;
}

}  // namespace emreg
