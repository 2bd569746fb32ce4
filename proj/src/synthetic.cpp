#include "emreg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "emreg/alignment.hpp"

namespace emreg {
namespace {

constexpr double kTwoPi = 2.0 * M_PI;
constexpr std::size_t kAlignedPoses = 5;

Pose pose_from(const Vec3& position, double yaw, double pitch, double roll) {
  const Eigen::Quaterniond q = Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                               Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                               Eigen::AngleAxisd(roll, Vec3::UnitX());
  return {q, position};
}

Eigen::Vector2d unit_shape(TrajectoryShape shape, double phase) {
  if (shape == TrajectoryShape::figure_eight) {
    return {std::sin(phase), std::sin(phase) * std::cos(phase)};
  }
  return {std::cos(phase), std::sin(phase)};
}

// Closed shapes as a 3D curve in the lap coordinate u (one lap per unit).
// Fragments sit at equal arc length along it.
class ClosedCurve {
 public:
  explicit ClosedCurve(const ScenarioConfig& c) : c_(c) {
    const double per_lap = static_cast<double>(c.num_fragments) / static_cast<double>(c.laps);
    span_ = static_cast<double>(c.num_fragments - 1) / per_lap;
    const double target = static_cast<double>(c.num_fragments - 1) * c.spacing;
    // The curve length grows monotonically with the scale; bisect for it.
    double lo = 0.0;
    double hi = target;
    for (int it = 0; it < 60; ++it) {
      scale_ = 0.5 * (lo + hi);
      tabulate();
      (length_.back() < target ? lo : hi) = scale_;
    }
    scale_ = 0.5 * (lo + hi);
    tabulate();
  }

  [[nodiscard]] Vec3 point(double u) const {
    const double phase = kTwoPi * u;
    const Eigen::Vector2d xy = (scale_ + c_.lap_offset * u) * unit_shape(c_.shape, phase);
    return {xy.x(), xy.y(), c_.height_amplitude * std::sin(c_.height_waves * phase)};
  }

  /// Lap coordinate at arc length s from the start.
  [[nodiscard]] double at_length(double s) const {
    const auto it = std::lower_bound(length_.begin(), length_.end(), s);
    if (it == length_.begin()) return 0.0;
    if (it == length_.end()) return span_;
    const auto k = static_cast<double>(it - length_.begin());
    const double lo = *(it - 1);
    const double hi = *it;
    const double t = hi > lo ? (s - lo) / (hi - lo) : 0.0;
    return span_ * (k - 1.0 + t) / static_cast<double>(length_.size() - 1);
  }

 private:
  void tabulate() {
    const std::size_t steps = std::max<std::size_t>(20000, 200 * c_.num_fragments);
    length_.assign(steps + 1, 0.0);
    Vec3 prev = point(0.0);
    for (std::size_t k = 1; k <= steps; ++k) {
      const Vec3 cur = point(span_ * static_cast<double>(k) / static_cast<double>(steps));
      length_[k] = length_[k - 1] + (cur - prev).norm();
      prev = cur;
    }
  }

  const ScenarioConfig& c_;
  double span_ = 0.0;
  double scale_ = 1.0;
  std::vector<double> length_;
};

std::vector<Pose> world_trajectory(const ScenarioConfig& c) {
  const std::size_t n = c.num_fragments;
  std::vector<Pose> out;
  out.reserve(n);
  if (c.shape == TrajectoryShape::line) {
    for (std::size_t k = 0; k < n; ++k) {
      const double kk = static_cast<double>(k);
      const Vec3 pos(kk * c.spacing, 0.05 * c.spacing * std::sin(kk / 3.0),
                     0.02 * c.spacing * std::sin(kk / 7.0));
      out.push_back(pose_from(pos, 0.05 * std::sin(kk / 5.0), 0.01 * std::cos(kk / 4.0),
                              0.01 * std::sin(kk / 6.0)));
    }
    return out;
  }
  const ClosedCurve curve(c);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = curve.at_length(static_cast<double>(k) * c.spacing);
    const double phase = kTwoPi * u;
    const Vec3 ahead = curve.point(u + 1e-6) - curve.point(u - 1e-6);
    out.push_back(pose_from(curve.point(u), std::atan2(ahead.y(), ahead.x()),
                            0.02 * std::cos(2.0 * phase), 0.02 * std::sin(3.0 * phase)));
  }
  return out;
}

struct Candidate {
  std::size_t keyframe;
  std::size_t partner;
};

std::size_t distance_index(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

double distance(std::span<const Pose> truth, std::size_t a, std::size_t b) {
  return (truth[a].translation() - truth[b].translation()).norm();
}

std::pair<std::size_t, std::size_t> canonical(std::size_t a, std::size_t b) {
  return {std::min(a, b), std::max(a, b)};
}

// Candidates in keyframe order, duplicates removed (first occurrence kept).
std::vector<Candidate> keyframe_candidates(const ScenarioConfig& c, std::span<const Pose> truth) {
  const std::size_t n = truth.size();
  std::vector<Candidate> out;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t kf = 0; kf < n; kf += c.keyframe_stride) {
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < n; ++j) {
      if (distance_index(kf, j) >= 2) others.push_back(j);
    }
    std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
      return distance(truth, kf, a) < distance(truth, kf, b);
    });
    const std::size_t take = std::min(c.loops_per_keyframe, others.size());
    for (std::size_t r = 0; r < take; ++r) {
      if (seen.insert(canonical(kf, others[r])).second) out.push_back({kf, others[r]});
    }
  }
  return out;
}

class MatchSampler {
 public:
  MatchSampler(const ScenarioConfig& c, std::span<const Pose> truth, std::mt19937_64& rng)
      : config_(c), truth_(truth), rng_(rng) {}

  std::vector<FeatureMatch> corresponding(std::size_t i, std::size_t j) {
    const std::size_t k1 = config_.matches_per_constraint;
    const auto outliers = static_cast<std::size_t>(
        std::llround(config_.outlier_match_fraction * static_cast<double>(k1)));
    std::vector<bool> is_outlier(k1, false);
    std::fill(is_outlier.begin(), is_outlier.begin() + static_cast<std::ptrdiff_t>(outliers), true);
    std::shuffle(is_outlier.begin(), is_outlier.end(), rng_);

    const Vec3 center = 0.5 * (truth_[i].translation() + truth_[j].translation());
    const Pose inv_i = inverse(truth_[i]);
    const Pose inv_j = inverse(truth_[j]);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::vector<FeatureMatch> out(k1);
    for (std::size_t k = 0; k < k1; ++k) {
      const Vec3 x = center + scene_offset();
      out[k].p = transform_point(inv_i, x);
      const Vec3 q = transform_point(inv_j, x);
      if (is_outlier[k]) {
        out[k].q = q + ball(config_.outlier_displacement);
      } else if (config_.match_noise > 0.0) {
        out[k].q = q + config_.match_noise * Vec3(noise(rng_), noise(rng_), noise(rng_));
      } else {
        out[k].q = q;
      }
    }
    return out;
  }

  // Unrelated points of the two fragments paired at random.
  std::vector<FeatureMatch> random(std::size_t i, std::size_t j) {
    std::vector<FeatureMatch> out(config_.matches_per_constraint);
    const Pose inv_i = inverse(truth_[i]);
    const Pose inv_j = inverse(truth_[j]);
    for (auto& m : out) {
      m.p = transform_point(inv_i, truth_[i].translation() + scene_offset());
      m.q = transform_point(inv_j, truth_[j].translation() + scene_offset());
    }
    return out;
  }

 private:
  Vec3 scene_offset() {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double e = config_.fragment_extent;
    return {e * u(rng_), e * u(rng_), 0.3 * e * u(rng_)};
  }

  Vec3 ball(double radius) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec3 dir(g(rng_), g(rng_), g(rng_));
    while (dir.squaredNorm() < 1e-24) dir = Vec3(g(rng_), g(rng_), g(rng_));
    return radius * std::cbrt(u(rng_)) * dir.normalized();
  }

  const ScenarioConfig& config_;
  std::span<const Pose> truth_;
  std::mt19937_64& rng_;
};

}  // namespace

void check_scenario(const ScenarioConfig& c) {
  auto fraction = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (c.num_fragments < 2) throw ScenarioError("num_fragments must be at least 2");
  if (!(c.spacing > 0.0)) throw ScenarioError("spacing must be positive");
  if (!(c.fragment_extent > 0.0)) throw ScenarioError("fragment_extent must be positive");
  if (!std::isfinite(c.height_amplitude) || !std::isfinite(c.height_waves)) {
    throw ScenarioError("height_amplitude and height_waves must be finite");
  }
  if (c.matches_per_constraint < 3) throw ScenarioError("matches_per_constraint must be at least 3");
  if (c.keyframe_stride < 1) throw ScenarioError("keyframe_stride must be at least 1");
  if (c.laps < 1) throw ScenarioError("laps must be at least 1");
  if (!fraction(c.outlier_match_fraction) || !fraction(c.outlier_loop_fraction)) {
    throw ScenarioError("outlier fractions must lie in [0, 1]");
  }
  if (!(c.match_noise >= 0.0) || !(c.outlier_displacement >= 0.0) || !(c.lap_offset >= 0.0)) {
    throw ScenarioError("noise, displacement and lap offset must be non-negative");
  }
}

std::vector<Pose> ground_truth_trajectory(const ScenarioConfig& config) {
  check_scenario(config);
  const std::vector<Pose> world = world_trajectory(config);
  const Pose anchor = inverse(world.front());
  std::vector<Pose> out;
  out.reserve(world.size());
  for (const auto& w : world) out.push_back(compose(anchor, w));
  out.front() = Pose::identity();
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> loop_candidates(const ScenarioConfig& config,
                                                                 std::span<const Pose> truth) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& c : keyframe_candidates(config, truth)) out.push_back(canonical(c.keyframe, c.partner));
  std::sort(out.begin(), out.end());
  return out;
}

ProblemGraph generate(const ScenarioConfig& config) {
  const std::vector<Pose> truth = ground_truth_trajectory(config);
  const std::size_t n = truth.size();
  const double far = 3.0 * config.spacing;
  std::mt19937_64 rng(config.seed);

  const std::vector<Candidate> candidates = keyframe_candidates(config, truth);
  const std::size_t total = candidates.size();
  const auto num_false = static_cast<std::size_t>(
      std::llround(config.outlier_loop_fraction * static_cast<double>(total)));
  const std::size_t num_true = total - num_false;

  std::vector<std::size_t> genuine;
  std::vector<std::size_t> spurious;
  for (std::size_t k = 0; k < total; ++k) {
    (distance(truth, candidates[k].keyframe, candidates[k].partner) < far ? genuine : spurious)
        .push_back(k);
  }
  if (num_true > genuine.size()) {
    std::ostringstream os;
    os << "scenario requests " << num_true << " true loops but only " << genuine.size()
       << " revisit pairs are achievable";
    throw ScenarioError(os.str());
  }
  std::shuffle(genuine.begin(), genuine.end(), rng);
  std::vector<std::size_t> true_ids(genuine.begin(),
                                    genuine.begin() + static_cast<std::ptrdiff_t>(num_true));
  std::sort(true_ids.begin(), true_ids.end());
  std::vector<std::size_t> false_ids = spurious;
  false_ids.insert(false_ids.end(), genuine.begin() + static_cast<std::ptrdiff_t>(num_true),
                   genuine.end());
  std::sort(false_ids.begin(), false_ids.end());

  std::set<std::pair<std::size_t, std::size_t>> used;
  for (std::size_t k : true_ids) used.insert(canonical(candidates[k].keyframe, candidates[k].partner));

  // A false loop keeps its keyframe and is re-targeted to a distant fragment.
  std::vector<std::pair<std::size_t, std::size_t>> false_pairs;
  for (std::size_t k : false_ids) {
    const std::size_t kf = candidates[k].keyframe;
    std::vector<std::size_t> eligible;
    for (std::size_t j = 0; j < n; ++j) {
      if (distance(truth, kf, j) > far && !used.count(canonical(kf, j))) eligible.push_back(j);
    }
    if (eligible.empty()) {
      std::ostringstream os;
      os << "no fragment farther than " << far << " m from keyframe " << kf
         << " is left for a false loop";
      throw ScenarioError(os.str());
    }
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    const auto pair = canonical(kf, eligible[pick(rng)]);
    used.insert(pair);
    false_pairs.push_back(pair);
  }

  ProblemGraph graph;
  graph.num_fragments = n;
  graph.ground_truth = truth;
  MatchSampler sampler(config, truth, rng);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    graph.odometry.push_back({i, sampler.corresponding(i, i + 1)});
  }
  for (std::size_t k : true_ids) {
    const auto [i, j] = canonical(candidates[k].keyframe, candidates[k].partner);
    graph.loops.push_back({i, j, sampler.corresponding(i, j), true});
  }
  for (const auto& [i, j] : false_pairs) {
    graph.loops.push_back({i, j, sampler.random(i, j), false});
  }
  std::sort(graph.loops.begin(), graph.loops.end(), [](const auto& a, const auto& b) {
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  return graph;
}

double aligned_translation_error(std::span<const Pose> poses, std::span<const Pose> truth) {
  if (poses.size() != truth.size()) throw std::invalid_argument("pose and ground-truth counts differ");
  if (poses.size() <= kAlignedPoses) {
    throw std::invalid_argument("trajectory evaluation needs at least 6 fragments");
  }
  std::vector<Vec3> est;
  std::vector<Vec3> gt;
  for (std::size_t k = 0; k < kAlignedPoses; ++k) {
    est.push_back(poses[k].translation());
    gt.push_back(truth[k].translation());
  }
  const auto align = align_points(est, gt);
  if (!align) throw std::invalid_argument("leading poses are collinear; alignment is undefined");

  double sum = 0.0;
  for (std::size_t k = kAlignedPoses; k < poses.size(); ++k) {
    sum += (transform_point(*align, poses[k].translation()) - truth[k].translation()).norm();
  }
  return sum / static_cast<double>(poses.size() - kAlignedPoses);
}

EvalResult evaluate(std::span<const Pose> poses, const ProblemGraph& graph,
                    const std::vector<bool>& labels) {
  if (!graph.ground_truth) throw std::invalid_argument("graph carries no ground truth");
  if (labels.size() != graph.loops.size()) {
    throw std::invalid_argument("label count does not match the number of loops");
  }
  EvalResult out;
  out.mean_translation_error = aligned_translation_error(poses, *graph.ground_truth);

  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto& oracle = graph.loops[k].oracle_inlier;
    if (!oracle) throw std::invalid_argument("graph carries no oracle label for every loop");
    LoopOutcome o;
    if (labels[k]) {
      o = *oracle ? LoopOutcome::true_positive : LoopOutcome::false_positive;
    } else {
      o = *oracle ? LoopOutcome::false_negative : LoopOutcome::true_negative;
    }
    out.outcomes.push_back(o);
    switch (o) {
      case LoopOutcome::true_positive: ++out.true_positives; break;
      case LoopOutcome::false_positive: ++out.false_positives; break;
      case LoopOutcome::true_negative: ++out.true_negatives; break;
      case LoopOutcome::false_negative: ++out.false_negatives; break;
    }
  }
  const std::size_t predicted = out.true_positives + out.false_positives;
  const std::size_t actual = out.true_positives + out.false_negatives;
  out.precision = predicted == 0 ? 1.0 : static_cast<double>(out.true_positives) / predicted;
  out.recall = actual == 0 ? 1.0 : static_cast<double>(out.true_positives) / actual;
  return out;
}

}  // namespace emreg
