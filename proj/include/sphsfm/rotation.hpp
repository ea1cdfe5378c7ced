#pragma once

#include <Eigen/Core>

namespace sphsfm {

template <typename T>
Eigen::Matrix<T, 3, 3> skew(const Eigen::Matrix<T, 3, 1>& v) {
  Eigen::Matrix<T, 3, 3> m;
  m << T(0), -v.z(), v.y(), v.z(), T(0), -v.x(), -v.y(), v.x(), T(0);
  return m;
}

/// Rodrigues' formula; exact for any angle, series expansion near zero.
Eigen::Matrix3d exp_so3(const Eigen::Vector3d& omega);

/// Inverse of exp_so3 with the rotation angle in [0, pi].
Eigen::Vector3d log_so3(const Eigen::Matrix3d& rotation);

/// Geodesic distance between two rotations, radians.
double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

/// Nearest rotation in Frobenius norm (polar decomposition through SVD).
Eigen::Matrix3d project_to_rotation(const Eigen::Matrix3d& m);

/// Angle between two nonzero vectors, robust near 0 and pi.
double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// An orthonormal pair spanning the plane orthogonal to a unit vector.
void tangent_basis(const Eigen::Vector3d& unit, Eigen::Vector3d& b1, Eigen::Vector3d& b2);

}  // namespace sphsfm
