#include <doctest.h>

#include <cmath>
#include <random>

#include "emreg/se3.hpp"

using emreg::Pose;
using emreg::Twist;
using emreg::Vec3;

namespace {

Pose random_pose(std::mt19937_64& rng, double max_angle = 3.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec3 axis(g(rng), g(rng), g(rng));
  axis.normalize();
  const double angle = max_angle * std::abs(u(rng));
  return {Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis)), Vec3(5 * u(rng), 5 * u(rng), 5 * u(rng))};
}

double rotation_distance(const Pose& a, const Pose& b) {
  return emreg::rotation_angle(emreg::compose(emreg::inverse(a), b));
}

void check_close(const Pose& a, const Pose& b, double tol) {
  CHECK(rotation_distance(a, b) < tol);
  CHECK((a.translation() - b.translation()).norm() < tol);
}

Pose rot(const Vec3& axis, double angle, const Vec3& t = Vec3::Zero()) {
  return {Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())), t};
}

}  // namespace

TEST_CASE("transform_point examples") {
  CHECK(emreg::transform_point(Pose::identity(), Vec3(1, 2, 3)).isApprox(Vec3(1, 2, 3)));
  CHECK((emreg::transform_point(rot(Vec3::UnitZ(), M_PI / 2), Vec3(1, 0, 0)) - Vec3(0, 1, 0))
            .norm() < 1e-12);
  // R_x(pi) (0,1,0) = (0,-1,0); plus (1,1,1).
  const Pose p = rot(Vec3::UnitX(), M_PI, Vec3(1, 1, 1));
  CHECK((emreg::transform_point(p, Vec3(0, 1, 0)) - Vec3(1, 0, 1)).norm() < 1e-12);
}

TEST_CASE("compose examples") {
  std::mt19937_64 rng(7);
  const Pose p = random_pose(rng);
  check_close(emreg::compose(Pose::identity(), p), p, 1e-12);
  check_close(emreg::compose(p, emreg::inverse(p)), Pose::identity(), 1e-9);
  const Pose z90 = rot(Vec3::UnitZ(), M_PI / 2);
  // q = (cos45, 0, 0, sin45); q^2 = (0, 0, 0, 1).
  const Pose z180 = emreg::compose(z90, z90);
  CHECK(std::abs(z180.rotation().z()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(z180.rotation().w()) < 1e-12);
}

TEST_CASE("quaternion stays unit and on the w >= 0 hemisphere") {
  const Pose p(Eigen::Quaterniond(-2.0, 0.5, -0.3, 1.0), Vec3(1, 2, 3));
  CHECK(std::abs(p.rotation().norm() - 1.0) < 1e-12);
  CHECK(p.rotation().w() >= 0.0);

  std::mt19937_64 rng(3);
  Pose acc = Pose::identity();
  for (int k = 0; k < 1000; ++k) {
    acc = emreg::compose(acc, random_pose(rng));
    REQUIRE(std::abs(acc.rotation().norm() - 1.0) < 1e-9);
    REQUIRE(acc.rotation().w() >= 0.0);
  }
}

TEST_CASE("group axioms on random poses") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 200; ++k) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Pose c = random_pose(rng);
    check_close(emreg::compose(emreg::compose(a, b), c), emreg::compose(a, emreg::compose(b, c)),
                1e-9);
    check_close(emreg::compose(emreg::inverse(a), a), Pose::identity(), 1e-9);
    check_close(emreg::compose(a, Pose::identity()), a, 1e-12);

    const Vec3 p(1.5, -2.0, 0.25);
    const Vec3 lhs = emreg::transform_point(emreg::compose(a, b), p);
    const Vec3 rhs = emreg::transform_point(a, emreg::transform_point(b, p));
    CHECK((lhs - rhs).norm() < 1e-9);
  }
}

TEST_CASE("exp examples") {
  check_close(emreg::exp_map(Twist()), Pose::identity(), 0.0 + 1e-15);
  const Pose z90 = emreg::exp_map(Twist(Vec3(0, 0, M_PI / 2), Vec3::Zero()));
  check_close(z90, rot(Vec3::UnitZ(), M_PI / 2), 1e-12);
}

TEST_CASE("log inverts exp") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SUBCASE("small twists") {
    for (int k = 0; k < 500; ++k) {
      const Twist xi(Vec3(u(rng), u(rng), u(rng)) * 1e-3, Vec3(u(rng), u(rng), u(rng)));
      const auto back = emreg::log_map(emreg::exp_map(xi));
      CHECK_FALSE(back.near_pi);
      CHECK((back.twist.vector() - xi.vector()).norm() < 1e-9);
    }
  }
  SUBCASE("angles up to pi - 1e-3") {
    for (int k = 0; k < 500; ++k) {
      Vec3 axis(u(rng), u(rng), u(rng));
      axis.normalize();
      const double angle = (M_PI - 1e-3) * std::abs(u(rng));
      const Twist xi(angle * axis, 3.0 * Vec3(u(rng), u(rng), u(rng)));
      const auto back = emreg::log_map(emreg::exp_map(xi));
      CHECK((back.twist.vector() - xi.vector()).norm() < 1e-9);
    }
  }
  SUBCASE("exp(log(T)) == T") {
    for (int k = 0; k < 200; ++k) {
      const Pose t = random_pose(rng, M_PI - 1e-3);
      check_close(emreg::exp_map(emreg::log_map(t).twist), t, 1e-9);
    }
  }
}

TEST_CASE("log flags rotations near pi") {
  const Pose half_turn = rot(Vec3(1, 1, 0), M_PI, Vec3(1, 0, 0));
  const auto out = emreg::log_map(half_turn);
  CHECK(out.near_pi);
  CHECK(out.twist.rotation.norm() == doctest::Approx(M_PI).epsilon(1e-9));
  CHECK_FALSE(emreg::log_map(rot(Vec3::UnitX(), M_PI - 1e-3)).near_pi);
}

TEST_CASE("retract is left multiplication by exp") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int k = 0; k < 50; ++k) {
    const Pose t = random_pose(rng);
    const Twist d(Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng)));
    check_close(emreg::retract(t, d), emreg::compose(emreg::exp_map(d), t), 1e-12);
    CHECK(emreg::retract(t, Twist()) == t);
  }
}
