#include "sphsfm/rotation.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace sphsfm {

Eigen::Matrix3d exp_so3(const Eigen::Vector3d& omega) {
  const double theta2 = omega.squaredNorm();
  const Eigen::Matrix3d k = skew(omega);
  if (theta2 < 1e-16) {
    return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  }
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

Eigen::Vector3d log_so3(const Eigen::Matrix3d& r) {
  const double cos_theta = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  const double sin_theta = 0.5 * w.norm();
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta < 1e-8) {
    return 0.5 * w;
  }
  if (M_PI - theta > 1e-6) {
    return (theta / (2.0 * sin_theta)) * w;
  }
  // Near pi: recover the axis from the symmetric part.
  const Eigen::Matrix3d s = 0.5 * (r + r.transpose()) - cos_theta * Eigen::Matrix3d::Identity();
  int col = 0;
  s.diagonal().maxCoeff(&col);
  Eigen::Vector3d axis = s.col(col).normalized();
  if (axis.dot(w) < 0.0) axis = -axis;
  return theta * axis;
}

double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return log_so3(a * b.transpose()).norm();
}

Eigen::Matrix3d project_to_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

void tangent_basis(const Eigen::Vector3d& unit, Eigen::Vector3d& b1, Eigen::Vector3d& b2) {
  const Eigen::Vector3d helper =
      std::abs(unit.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  b1 = unit.cross(helper).normalized();
  b2 = unit.cross(b1);
}

}  // namespace sphsfm
