#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>

#include "emreg/graph.hpp"
#include "test_util.hpp"

using namespace emreg;

namespace {

ProblemGraph three_fragments() {
  std::mt19937_64 rng(1);
  return testing::chain_graph(testing::walk(3, rng), 4, rng);
}

}  // namespace

TEST_CASE("validate accepts a well-formed graph") {
  const ProblemGraph g = three_fragments();
  CHECK(validate(g).empty());
  CHECK(validate(g).empty());  // idempotent
}

TEST_CASE("validate reports each broken invariant") {
  SUBCASE("missing odometry") {
    ProblemGraph g = three_fragments();
    g.odometry.erase(g.odometry.begin() + 1);
    CHECK(validate(g) == std::vector<Violation>{{ViolationKind::missing_odometry, 1, 2}});
  }
  SUBCASE("loop between consecutive fragments") {
    ProblemGraph g = three_fragments();
    g.loops.push_back({1, 2, g.odometry[1].matches, std::nullopt});
    CHECK(validate(g) == std::vector<Violation>{{ViolationKind::loop_too_short, 1, 2}});
  }
  SUBCASE("non-canonical, duplicate and out-of-range loops") {
    std::mt19937_64 rng(2);
    ProblemGraph g = testing::chain_graph(testing::walk(5, rng), 4, rng);
    const auto m = g.odometry[0].matches;
    g.loops.push_back({0, 3, m, std::nullopt});
    g.loops.push_back({0, 3, m, std::nullopt});
    g.loops.push_back({4, 1, m, std::nullopt});
    g.loops.push_back({0, 9, m, std::nullopt});
    const auto v = validate(g);
    CHECK(v == std::vector<Violation>{{ViolationKind::duplicate_loop, 0, 3},
                                      {ViolationKind::loop_not_canonical, 4, 1},
                                      {ViolationKind::loop_out_of_range, 0, 9}});
  }
  SUBCASE("empty and non-finite match sets") {
    ProblemGraph g = three_fragments();
    g.odometry[0].matches.clear();
    g.odometry[1].matches[0].p.x() = std::numeric_limits<double>::quiet_NaN();
    CHECK(validate(g) == std::vector<Violation>{{ViolationKind::empty_matches, 0, 1},
                                                {ViolationKind::non_finite, 1, 2}});
  }
  SUBCASE("duplicate odometry and wrong pose counts") {
    ProblemGraph g = three_fragments();
    g.odometry.push_back(g.odometry[0]);
    g.ground_truth->pop_back();
    CHECK(validate(g) == std::vector<Violation>{{ViolationKind::duplicate_odometry, 0, 1},
                                                {ViolationKind::pose_count_mismatch, 2, 3}});
  }
  SUBCASE("odometry past the last fragment") {
    ProblemGraph g = three_fragments();
    g.odometry.push_back({2, g.odometry[0].matches});
    CHECK(validate(g) == std::vector<Violation>{{ViolationKind::odometry_out_of_range, 2, 3}});
  }
  SUBCASE("empty graph") {
    CHECK(validate(ProblemGraph{}) == std::vector<Violation>{{ViolationKind::no_fragments}});
  }
}

TEST_CASE("describe names the constraint") {
  CHECK(describe({ViolationKind::missing_odometry, 1, 2}) == "missing odometry constraint 1 -> 2");
  CHECK(describe({ViolationKind::loop_too_short, 3, 4}).find("3 - 4") != std::string::npos);
}

TEST_CASE("initialize_poses chains exact odometry") {
  std::mt19937_64 rng(8);
  const auto truth = testing::walk(12, rng);
  const ProblemGraph g = testing::chain_graph(truth, 20, rng);
  const auto poses = initialize_poses(g);
  CHECK(poses.front() == Pose::identity());
  CHECK(testing::max_pose_error(poses, truth) < 1e-6);
}

TEST_CASE("initialize_poses uses INIT verbatim") {
  std::mt19937_64 rng(9);
  ProblemGraph g = testing::chain_graph(testing::walk(4, rng), 5, rng);
  std::vector<Pose> init;
  for (int k = 0; k < 4; ++k) init.push_back(testing::random_pose(rng));
  g.initial_poses = init;
  CHECK(initialize_poses(g) == init);
}

TEST_CASE("odometry alignment tolerates 30% gross outliers") {
  // Oracle: the generator's own relative pose.
  std::mt19937_64 rng(10);
  const double sigma = 0.5;
  for (int trial = 0; trial < 10; ++trial) {
    const Pose ti = Pose::identity();
    const Pose tj = testing::random_pose(rng, 0.3, 3.0);
    OdometryConstraint odom{0, testing::exact_matches(ti, tj, 200, rng)};
    std::vector<std::size_t> idx(200);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::uniform_real_distribution<double> mag(5.0 * sigma, 20.0 * sigma);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t k = 0; k < 60; ++k) {
      odom.matches[idx[k]].q += mag(rng) * Vec3(g(rng), g(rng), g(rng)).normalized();
    }
    const Pose rel = odometry_relative_pose(odom);
    const Pose expected = compose(inverse(ti), tj);
    CHECK(rotation_angle(compose(inverse(rel), expected)) < 1e-3);
    CHECK((rel.translation() - expected.translation()).norm() < 1e-3);
  }
}

TEST_CASE("initialize_poses reports degenerate match sets") {
  ProblemGraph g = three_fragments();
  for (auto& m : g.odometry[1].matches) m.p = m.q = Vec3(1, 2, 3);
  try {
    (void)initialize_poses(g);
    FAIL("expected AlignmentError");
  } catch (const AlignmentError& e) {
    CHECK(e.odometry_index() == 1);
    CHECK(std::string(e.what()).find("1 -> 2") != std::string::npos);
  }
}

TEST_CASE("initialize_poses rejects invalid graphs") {
  ProblemGraph g = three_fragments();
  g.odometry.pop_back();
  CHECK_THROWS_AS((void)initialize_poses(g), ValidationError);
}

TEST_CASE("hyperparameter ranges") {
  Hyperparams p;
  CHECK_NOTHROW(check_hyperparams(p));
  p.sigma = 0.0;
  CHECK_THROWS_AS(check_hyperparams(p), std::invalid_argument);
  p = {};
  p.p_hat = 1.0;
  CHECK_THROWS_AS(check_hyperparams(p), std::invalid_argument);
  p = {};
  p.epsilon = -1.0;
  CHECK_THROWS_AS(check_hyperparams(p), std::invalid_argument);
}
