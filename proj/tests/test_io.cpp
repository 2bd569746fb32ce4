#include <doctest.h>

#include "emreg/io.hpp"
#include "emreg/mixture_em.hpp"
#include "emreg/synthetic.hpp"
#include "test_util.hpp"

using namespace emreg;

namespace {

std::size_t parse_error_line(std::string_view text) {
  try {
    (void)parse_graph(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("minimal graph file") {
  const char* text =
      "PCG 1 2\n"
      "# two fragments\n"
      "ODOM 0 3\n"
      "M 0 0 0 0 0 0\n"
      "M 1 0 0 1 0 0\n"
      "M 0 1 0 0 1 0   # trailing comment\n";
  const ProblemGraph g = parse_graph(text);
  CHECK(g.num_fragments == 2);
  REQUIRE(g.odometry.size() == 1);
  CHECK(g.odometry[0].matches.size() == 3);
  CHECK(g.odometry[0].matches[1].p == Vec3(1, 0, 0));
  CHECK(g.loops.empty());
  CHECK_FALSE(g.initial_poses);
  CHECK_FALSE(g.ground_truth);
  CHECK(validate(g).empty());
}

TEST_CASE("match count mismatch names the line") {
  const char* text =
      "PCG 1 3\n"
      "ODOM 0 3\n"
      "M 0 0 0 0 0 0\n"
      "M 1 0 0 1 0 0\n"
      "ODOM 1 1\n"
      "M 0 0 0 0 0 0\n";
  try {
    (void)parse_graph(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
    CHECK(std::string(e.what()).rfind("line 5: ", 0) == 0);
    CHECK(e.reason().find("line 2") != std::string::npos);
  }
  CHECK(parse_error_line("PCG 1 2\nODOM 0 3\nM 0 0 0 0 0 0\n") == 2);
}

TEST_CASE("malformed input is rejected with the offending line") {
  CHECK(parse_error_line("") == 1);
  CHECK(parse_error_line("ODOM 0 1\n") == 1);
  CHECK(parse_error_line("PCG 2 4\n") == 1);
  CHECK(parse_error_line("PCG 1 4\nPCG 1 4\n") == 2);
  CHECK(parse_error_line("PCG 1 4\n\nFOO 1 2\n") == 3);
  CHECK(parse_error_line("PCG 1 4\nODOM 0 1\nM 0 0 0 0 0\n") == 3);
  CHECK(parse_error_line("PCG 1 4\nODOM 0 1\nM 0 0 x 0 0 0\n") == 3);
  CHECK(parse_error_line("PCG 1 4\nODOM -1 1\n") == 2);
  CHECK(parse_error_line("PCG 1 4\nM 0 0 0 0 0 0\n") == 2);
  CHECK(parse_error_line("PCG 1 2\nGT 2 0 0 0 1 0 0 0\n") == 2);
  CHECK(parse_error_line("PCG 1 2\nGT 0 0 0 0 0 0 0 0\n") == 2);
  CHECK(parse_error_line("PCG 1 2\nGT 0 0 0 0 1 0 0 0\nGT 0 0 0 0 1 0 0 0\n") == 3);
  CHECK(parse_error_line("PCG 1 2\nGT 0 0 0 0 1 0 0 0\n") == 2);  // incomplete set
  CHECK(parse_error_line("PCG 1 4\nLABEL 0 2 1\n") == 2);
  CHECK(parse_error_line("PCG 1 4\nLOOP 0 2 1\nM 0 0 0 0 0 0\nLABEL 0 2 3\n") == 4);
  CHECK(parse_error_line("PCG 1 4\nLOOP 0 2 1\nM 0 0 0 0 0 0\nLABEL 0 2 1\nLABEL 0 2 0\n") == 5);
  CHECK(parse_error_line("PCG 1 4\nODOM 0 99999999999\n") == 2);
}

TEST_CASE("syntax and structure are separate") {
  // Parses, but a loop between neighbors is a validation problem.
  const ProblemGraph g = parse_graph(
      "PCG 1 2\nODOM 0 1\nM 0 0 0 0 0 0\nLOOP 0 1 1\nM 0 0 0 0 0 0\n");
  CHECK(validate(g) == std::vector<Violation>{{ViolationKind::loop_too_short, 0, 1}});
  const ProblemGraph nan = parse_graph("PCG 1 2\nODOM 0 1\nM 0 0 nan 0 0 0\n");
  CHECK(validate(nan) == std::vector<Violation>{{ViolationKind::non_finite, 0, 1}});
}

TEST_CASE("records are order independent") {
  const ProblemGraph g = parse_graph(
      "PCG 1 4\n"
      "LABEL 1 3 0\n"
      "LOOP 1 3 1\nM 0 0 0 0 0 0\n"
      "ODOM 2 1\nM 0 0 0 0 0 0\n"
      "LOOP 0 2 1\nM 0 0 0 0 0 0\n"
      "ODOM 0 1\nM 0 0 0 0 0 0\n"
      "ODOM 1 1\nM 0 0 0 0 0 0\n");
  CHECK(g.odometry[0].i == 0);
  CHECK(g.odometry[2].i == 2);
  CHECK(g.loops[0].i == 0);
  CHECK(g.loops[1].oracle_inlier == false);
  CHECK_FALSE(g.loops[0].oracle_inlier);
  CHECK(validate(g).empty());
}

TEST_CASE("synthetic graph round trip") {
  ScenarioConfig c;
  const ProblemGraph g = generate(c);
  REQUIRE(g.num_fragments == 100);
  const std::string text = write_graph(g);
  const ProblemGraph back = parse_graph(text);
  CHECK(testing::same_graph(g, back));
  CHECK(write_graph(back) == text);
}

TEST_CASE("random graphs round trip bit exactly") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const ProblemGraph g = testing::fuzz_graph(rng);
    const std::string text = write_graph(g);
    const ProblemGraph back = parse_graph(text);
    REQUIRE(testing::same_graph(g, back));
    REQUIRE(write_graph(back) == text);
  }
}

TEST_CASE("number formatting") {
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(-0.0) == "-0");
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(1e300) == "1.0000000000000001e+300");
}

TEST_CASE("pose lists") {
  const std::vector<Pose> identities(2);
  const std::string text = write_poses(identities);
  CHECK(text == "POSE 0 0 0 0 1 0 0 0\nPOSE 1 0 0 0 1 0 0 0\n");
  CHECK(parse_poses(text) == identities);

  std::mt19937_64 rng(3);
  std::vector<Pose> poses;
  for (int k = 0; k < 50; ++k) poses.push_back(testing::random_pose(rng, 3.0, 100.0));
  CHECK(parse_poses(write_poses(poses)) == poses);
  CHECK_THROWS_AS((void)parse_poses("POSE 1 0 0 0 1 0 0 0\n"), ParseError);
  CHECK_THROWS_AS((void)parse_poses("POSE 0 0 0 0 1 0 0\n"), ParseError);

  CHECK(write_trajectory_csv(identities) == "id,tx,ty,tz\n0,0,0,0\n1,0,0,0\n");
}

TEST_CASE("reports") {
  std::mt19937_64 rng(4);
  const auto truth = testing::walk(8, rng);
  const ProblemGraph odometry_only = testing::chain_graph(truth, 10, rng, 0.01);
  const Hyperparams params;
  const RunReport empty = make_report(odometry_only, params, run_em(odometry_only, params));
  CHECK(empty.loops.empty());
  REQUIRE(empty.metrics);
  const std::string text = write_report(empty);
  CHECK(parse_report_loops(text).empty());
  CHECK(text.find("[metrics]") != std::string::npos);

  ScenarioConfig c;
  c.num_fragments = 30;
  c.laps = 2;
  const ProblemGraph g = generate(c);
  const EmResult em = run_em(g, params);
  const RunReport report = make_report(g, params, em);
  const auto rows = parse_report_loops(write_report(report));
  REQUIRE(rows.size() == g.loops.size());
  const auto labels = classify_loops(em.posterior);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    CHECK(rows[k].i == g.loops[k].i);
    CHECK(rows[k].j == g.loops[k].j);
    CHECK(rows[k].posterior == em.posterior.posteriors[k]);
    CHECK(rows[k].error == em.posterior.loop_errors[k]);
    CHECK(rows[k].inlier == labels[k]);
  }
  CHECK_THROWS_AS((void)parse_report_loops("mode cauchy\n"), ParseError);
}

TEST_CASE("scenario configs") {
  const ScenarioConfig c = parse_scenario_config(
      R"({"num_fragments": 40, "shape": "figure-eight", "match_noise": 0.01, "seed": 7})");
  CHECK(c.num_fragments == 40);
  CHECK(c.shape == TrajectoryShape::figure_eight);
  CHECK(c.match_noise == 0.01);
  CHECK(c.seed == 7);
  CHECK(c.keyframe_stride == ScenarioConfig{}.keyframe_stride);
  CHECK(parse_scenario_config("{}").num_fragments == 100);
  CHECK_THROWS_AS((void)parse_scenario_config(R"({"nope": 1})"), ParseError);
  CHECK_THROWS_AS((void)parse_scenario_config(R"({"shape": "square"})"), ParseError);
  CHECK_THROWS_AS((void)parse_scenario_config(R"({"seed": "x"})"), ParseError);
  CHECK_THROWS_AS((void)parse_scenario_config("[1, 2]"), ParseError);
  CHECK_THROWS_AS((void)parse_scenario_config("{"), ParseError);
}
