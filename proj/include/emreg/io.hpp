// Text formats: the constraint-graph file, pose lists, run reports and
// scenario configs.
//
// Graph grammar, one record per line, '#' starts a comment:
//   PCG 1 <N>
//   INIT <id> tx ty tz qw qx qy qz
//   GT <id> tx ty tz qw qx qy qz
//   ODOM <i> <k>        followed by k lines  M px py pz qx qy qz
//   LOOP <i> <j> <k>    followed by k lines  M px py pz qx qy qz
//   LABEL <i> <j> <0|1>

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "emreg/graph.hpp"
#include "emreg/mixture_em.hpp"
#include "emreg/synthetic.hpp"

namespace emreg {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& reason);
  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] const std::string& reason() const { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

/// Syntax only; structural checks are left to validate(). Loops come back
/// sorted by (i, j).
[[nodiscard]] ProblemGraph parse_graph(std::string_view text);
[[nodiscard]] std::string write_graph(const ProblemGraph& graph);

[[nodiscard]] std::string write_poses(std::span<const Pose> poses);
[[nodiscard]] std::vector<Pose> parse_poses(std::string_view text);
/// id,tx,ty,tz rows with a header line.
[[nodiscard]] std::string write_trajectory_csv(std::span<const Pose> poses);

/// %.17g-style text; parses back to the identical double.
[[nodiscard]] std::string format_number(double value);

struct LoopRecord {
  std::size_t i = 0;
  std::size_t j = 0;
  double error = 0.0;
  double posterior = 0.0;
  bool inlier = false;
};

struct RunReport {
  Hyperparams params;
  std::size_t num_fragments = 0;
  EmTrace trace;
  double final_theta = 0.0;
  std::vector<LoopRecord> loops;
  std::optional<EvalResult> metrics;
};

[[nodiscard]] RunReport make_report(const ProblemGraph& graph, const Hyperparams& params,
                                    const EmResult& result);
[[nodiscard]] std::string write_report(const RunReport& report);

/// Loop rows of a report's [loops] section.
[[nodiscard]] std::vector<LoopRecord> parse_report_loops(std::string_view text);

/// JSON object whose keys are ScenarioConfig field names; missing keys keep
/// their defaults.
[[nodiscard]] ScenarioConfig parse_scenario_config(std::string_view json_text);

[[nodiscard]] std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[nodiscard]] const char* to_string(ErrorModel mode);
[[nodiscard]] const char* to_string(GaussianTheta reading);

}  // namespace emreg
