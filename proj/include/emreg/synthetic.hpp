// Synthetic fragment graphs with known ground truth, and the trajectory /
// loop-classification metrics used to score a solve.

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "emreg/graph.hpp"

namespace emreg {

enum class TrajectoryShape { line, circle, figure_eight };

struct ScenarioConfig {
  std::size_t num_fragments = 100;
  TrajectoryShape shape = TrajectoryShape::circle;
  /// Closed shapes are traversed this many times; later laps are shifted
  /// sideways by `lap_offset` so revisits are near but not coincident.
  std::size_t laps = 4;
  double lap_offset = 1.0;       // m
  double spacing = 5.0;          // m between consecutive fragments
  double fragment_extent = 8.0;  // m, half-width of the region features are drawn from
  /// Closed shapes undulate vertically: z = height_amplitude * sin(height_waves * phase).
  double height_amplitude = 3.0;  // m
  double height_waves = 4.0;      // per lap
  std::size_t matches_per_constraint = 50;  // k1
  std::size_t loops_per_keyframe = 5;       // k2
  std::size_t keyframe_stride = 5;
  double match_noise = 0.05;                // m, std of inlier noise on q
  double outlier_match_fraction = 0.3;
  double outlier_displacement = 5.0;        // m, ball radius for outlier q
  double outlier_loop_fraction = 0.8;
  std::uint64_t seed = 1;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws ScenarioError when the config is out of range.
void check_scenario(const ScenarioConfig& config);

/// Ground-truth trajectory (world frame anchored at fragment 0).
[[nodiscard]] std::vector<Pose> ground_truth_trajectory(const ScenarioConfig& config);

/// Place-recognition candidates before outlier injection: for each keyframe
/// the k2 spatially nearest fragments at least 2 indices away, as canonical
/// (i < j) pairs with duplicates removed, sorted.
[[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> loop_candidates(
    const ScenarioConfig& config, std::span<const Pose> truth);

/// Deterministic in config (including seed). Carries GT poses and oracle labels.
[[nodiscard]] ProblemGraph generate(const ScenarioConfig& config);

enum class LoopOutcome { true_positive, false_positive, true_negative, false_negative };

struct EvalResult {
  double mean_translation_error = 0.0;
  double precision = 1.0;
  double recall = 1.0;
  std::vector<LoopOutcome> outcomes;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t true_negatives = 0;
  std::size_t false_negatives = 0;
};

/// Aligns the first 5 estimated translations to ground truth, then averages
/// the translation error over the remaining poses. Precision (recall) is 1
/// when nothing is predicted (nothing is an oracle inlier).
[[nodiscard]] EvalResult evaluate(std::span<const Pose> poses, const ProblemGraph& graph,
                                  const std::vector<bool>& labels);

/// Trajectory part of evaluate only.
[[nodiscard]] double aligned_translation_error(std::span<const Pose> poses,
                                               std::span<const Pose> truth);

}  // namespace emreg
