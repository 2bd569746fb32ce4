#include "emreg/alignment.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <vector>

namespace emreg {
namespace {

// Residual floor for trimming: exact data has a median of ~1e-16 and must not
// lose its inliers to round-off.
constexpr double kTrimFloor = 1e-9;

bool well_spread(const Mat3& scatter) {
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter, Eigen::EigenvaluesOnly);
  const Vec3 ev = eig.eigenvalues();  // ascending
  return ev(2) > 0.0 && ev(1) > 1e-12 * ev(2);
}

}  // namespace

std::optional<Pose> align_points(std::span<const Vec3> source, std::span<const Vec3> target) {
  const std::size_t n = source.size();
  if (n < 3 || target.size() != n) return std::nullopt;

  Vec3 cs = Vec3::Zero();
  Vec3 ct = Vec3::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    cs += source[k];
    ct += target[k];
  }
  cs /= static_cast<double>(n);
  ct /= static_cast<double>(n);

  Mat3 S = Mat3::Zero();
  Mat3 scatter_s = Mat3::Zero();
  Mat3 scatter_t = Mat3::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3 a = source[k] - cs;
    const Vec3 b = target[k] - ct;
    S += a * b.transpose();
    scatter_s += a * a.transpose();
    scatter_t += b * b.transpose();
  }
  if (!well_spread(scatter_s) || !well_spread(scatter_t)) return std::nullopt;

  const double sxx = S(0, 0), sxy = S(0, 1), sxz = S(0, 2);
  const double syx = S(1, 0), syy = S(1, 1), syz = S(1, 2);
  const double szx = S(2, 0), szy = S(2, 1), szz = S(2, 2);
  Eigen::Matrix4d N;
  // clang-format off
  N << sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
       syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
       szx - sxz,       sxy + syx,       -sxx + syy - szz,  syz + szy,
       sxy - syx,       szx + sxz,        syz + szy,       -sxx - syy + szz;
  // clang-format on
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(N);
  const Eigen::Vector4d v = eig.eigenvectors().col(3);
  const Eigen::Quaterniond q(v(0), v(1), v(2), v(3));
  const Pose rot(q.normalized(), Vec3::Zero());
  return Pose(rot.rotation(), ct - transform_point(rot, cs));
}

std::optional<TrimmedAlignment> align_points_trimmed(std::span<const Vec3> source,
                                                     std::span<const Vec3> target,
                                                     int rounds, double factor) {
  auto fit = align_points(source, target);
  if (!fit) return std::nullopt;
  std::size_t used = source.size();

  std::vector<double> residuals(source.size());
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  for (int round = 0; round < rounds; ++round) {
    for (std::size_t k = 0; k < source.size(); ++k) {
      residuals[k] = (transform_point(*fit, source[k]) - target[k]).norm();
    }
    std::vector<double> sorted = residuals;
    const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>((sorted.size() - 1) / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double cutoff = std::max(factor * *mid, kTrimFloor);

    src.clear();
    dst.clear();
    for (std::size_t k = 0; k < source.size(); ++k) {
      if (residuals[k] <= cutoff) {
        src.push_back(source[k]);
        dst.push_back(target[k]);
      }
    }
    auto refit = align_points(src, dst);
    if (!refit) return std::nullopt;
    fit = refit;
    used = src.size();
  }
  return TrimmedAlignment{*fit, used};
}

}  // namespace emreg
