#pragma once

#include <Eigen/Geometry>
#include <cmath>
#include <random>
#include <vector>

#include "sphsfm/sphere_geometry.hpp"
#include "sphsfm/synthetic.hpp"

namespace sphsfm::testing {

inline double deg(double rad) { return rad * 180.0 / M_PI; }
inline double rad(double deg) { return deg * M_PI / 180.0; }

/// Direction of a world point seen from a pose, computed without the library's projection code.
inline Eigen::Vector3d ray_of(const Pose& pose, const Eigen::Vector3d& x) {
  return (pose.rotation() * x + pose.translation()).normalized();
}

struct TwoViewScene {
  Pose a;  // identity
  Pose b;
  std::vector<Eigen::Vector3d> points;
  std::vector<SpherePoint> p1, p2;
};

/// Camera a at the origin, camera b at a random unit baseline and rotation; points
/// scattered in a shell of radius [2, 6] around the midpoint, so every direction occurs.
inline TwoViewScene random_two_view(std::mt19937_64& rng, int n, double max_angle_rad = M_PI) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TwoViewScene s;
  const Eigen::Vector3d axis = random_unit_vector(rng);
  const Eigen::Matrix3d r = Eigen::AngleAxisd(max_angle_rad * u(rng), axis).toRotationMatrix();
  const Eigen::Vector3d t = random_unit_vector(rng);
  s.b = Pose(r, t);
  const Eigen::Vector3d mid = 0.5 * s.b.center();
  while (static_cast<int>(s.points.size()) < n) {
    const Eigen::Vector3d x = mid + (2.0 + 4.0 * u(rng)) * random_unit_vector(rng);
    s.points.push_back(x);
    s.p1.push_back(SpherePoint::from_vector(ray_of(s.a, x)));
    s.p2.push_back(SpherePoint::from_vector(ray_of(s.b, x)));
  }
  return s;
}

/// Frobenius distance between two matrices after unit-norm scaling, minimized over sign.
inline double essential_distance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const Eigen::Matrix3d na = a / a.norm();
  const Eigen::Matrix3d nb = b / b.norm();
  return std::min((na - nb).norm(), (na + nb).norm());
}

}  // namespace sphsfm::testing
