#include "emreg/se3.hpp"

#include <cmath>
#include <limits>

namespace emreg {
namespace {

constexpr double kSmallAngle = 1e-5;
constexpr double kNearPi = 1e-6;

Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
  // Leave quaternions that are already unit to machine precision untouched so
  // that parse/write round trips are bit exact.
  const double n2 = q.squaredNorm();
  if (std::abs(n2 - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) {
    q.coeffs() /= std::sqrt(n2);
  }
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

}  // namespace

Pose::Pose(const Eigen::Quaterniond& rotation, const Vec3& translation)
    : q_(canonical(rotation)), t_(translation) {}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : q_(canonical(Eigen::Quaterniond(rotation))), t_(translation) {}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<     0, -v.z(),  v.y(),
       v.z(),      0, -v.x(),
      -v.y(),  v.x(),      0;
  // clang-format on
  return s;
}

Vec3 transform_point(const Pose& pose, const Vec3& p) {
  return pose.rotation() * p + pose.translation();
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

Pose inverse(const Pose& pose) {
  const Eigen::Quaterniond qi = pose.rotation().conjugate();
  return {qi, -(qi * pose.translation())};
}

Pose exp_map(const Twist& xi) {
  const Vec3& w = xi.rotation;
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 W = skew(w);

  Eigen::Quaterniond q;
  Mat3 V;
  if (theta < kSmallAngle) {
    const double s = 0.5 - theta2 / 48.0;
    q = Eigen::Quaterniond(1.0 - theta2 / 8.0, s * w.x(), s * w.y(), s * w.z());
    V = Mat3::Identity() + 0.5 * W + W * W / 6.0;
  } else {
    const double half = 0.5 * theta;
    const double sh = std::sin(half);
    const double s = sh / theta;
    q = Eigen::Quaterniond(std::cos(half), s * w.x(), s * w.y(), s * w.z());
    V = Mat3::Identity() + 2.0 * sh * sh / theta2 * W +
        (theta - std::sin(theta)) / (theta2 * theta) * W * W;
  }
  return {q, V * xi.translation};
}

LogResult log_map(const Pose& pose) {
  const Eigen::Quaterniond& q = pose.rotation();
  const Vec3 v = q.vec();
  const double vn = v.norm();
  const double w = q.w();  // >= 0 by construction

  LogResult out;
  Vec3 omega;
  double theta;
  if (vn < kSmallAngle) {
    // atan2(vn, w) / vn expanded around vn = 0 with w close to 1.
    const double inv_w = 1.0 / w;
    omega = 2.0 * inv_w * (1.0 - vn * vn / (3.0 * w * w)) * v;
    theta = omega.norm();
  } else {
    theta = 2.0 * std::atan2(vn, w);
    omega = (theta / vn) * v;
  }
  out.near_pi = std::abs(theta - M_PI) < kNearPi;

  const Mat3 W = skew(omega);
  Mat3 V_inv;
  if (theta < kSmallAngle) {
    V_inv = Mat3::Identity() - 0.5 * W + W * W / 12.0;
  } else {
    // theta sin(theta) / (2 (1 - cos(theta))) == (theta / 2) cot(theta / 2)
    const double half = 0.5 * theta;
    const double c = (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta);
    V_inv = Mat3::Identity() - 0.5 * W + c * W * W;
  }
  out.twist = Twist(omega, V_inv * pose.translation());
  return out;
}

Pose retract(const Pose& pose, const Twist& delta) {
  if (delta.rotation.isZero(0.0) && delta.translation.isZero(0.0)) return pose;
  return compose(exp_map(delta), pose);
}

double rotation_angle(const Pose& pose) {
  return 2.0 * std::atan2(pose.rotation().vec().norm(), std::abs(pose.rotation().w()));
}

}  // namespace emreg
