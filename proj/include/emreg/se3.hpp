// SE(3) poses, twists and the left-multiplicative local parameterization used
// by every residual in the solver.

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace emreg {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

/// Tangent vector of SE(3): axis-angle rotation (rad) followed by translation (m).
struct Twist {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  Twist() = default;
  Twist(const Vec3& rot, const Vec3& trans) : rotation(rot), translation(trans) {}

  static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  [[nodiscard]] Vec6 vector() const {
    Vec6 v;
    v << rotation, translation;
    return v;
  }
};

/// Rigid transform x -> R x + t. The quaternion is kept unit-norm and on the
/// w >= 0 hemisphere so that equal rotations compare equal.
class Pose {
 public:
  Pose() = default;
  Pose(const Eigen::Quaterniond& rotation, const Vec3& translation);
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return {}; }

  [[nodiscard]] const Eigen::Quaterniond& rotation() const { return q_; }
  [[nodiscard]] const Vec3& translation() const { return t_; }
  [[nodiscard]] Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }

  friend bool operator==(const Pose& a, const Pose& b) {
    return a.q_.coeffs() == b.q_.coeffs() && a.t_ == b.t_;
  }

 private:
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
  Vec3 t_ = Vec3::Zero();
};

[[nodiscard]] Vec3 transform_point(const Pose& pose, const Vec3& p);

/// (a ∘ b)(p) == a(b(p)).
[[nodiscard]] Pose compose(const Pose& a, const Pose& b);
[[nodiscard]] Pose inverse(const Pose& pose);

[[nodiscard]] Pose exp_map(const Twist& xi);

struct LogResult {
  Twist twist;
  /// Set when the rotation angle is within 1e-6 of pi, where the axis is
  /// poorly determined.
  bool near_pi = false;
};
[[nodiscard]] LogResult log_map(const Pose& pose);

/// exp(delta) ∘ pose.
[[nodiscard]] Pose retract(const Pose& pose, const Twist& delta);

/// Rotation angle in [0, pi].
[[nodiscard]] double rotation_angle(const Pose& pose);

[[nodiscard]] Mat3 skew(const Vec3& v);

}  // namespace emreg
