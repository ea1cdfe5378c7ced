#pragma once

// Relative orientation of two spherical images.

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sphsfm/sphere_geometry.hpp"

namespace sphsfm {

struct RansacParams {
  double e_p = 4.0;  // pixels
  int max_iterations = 10000;
  double confidence = 0.9999;
  std::uint64_t rng_seed = 0;
  /// Classify with max(err(E, p1, p2), err(E^T, p2, p1)) instead of the one-sided error.
  bool symmetric_error = true;
};

void validate(const RansacParams& params);

/// Pixel threshold to spherical angle: 2 pi e_p / max(W, H).
double pixel_threshold_to_angle(double e_p, const ImageDims& dims);

/// 3x3 essential matrix, Frobenius norm sqrt(2), singular values (1, 1, 0).
class EssentialMatrix {
 public:
  EssentialMatrix() : m_(Eigen::Matrix3d::Zero()) {}
  /// Projects an arbitrary nonzero matrix onto the essential manifold.
  static EssentialMatrix project(const Eigen::Matrix3d& m);
  /// [T]x R, normalized.
  static EssentialMatrix from_motion(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

  const Eigen::Matrix3d& matrix() const { return m_; }

 private:
  explicit EssentialMatrix(const Eigen::Matrix3d& m) : m_(m) {}
  Eigen::Matrix3d m_;
};

/// Motion from camera a to camera b: X_b = R X_a + T, with |T| = 1.
struct RelativePose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::UnitX();

  Pose to_pose() const { return Pose(rotation, translation); }
};

/// Linear eight-point solution of p2^T E p1 = 0. Throws Degenerate when the
/// stacked system has a null space of dimension > 1 or fewer than 8 pairs are given.
EssentialMatrix essential_8point(std::span<const SpherePoint> p1, std::span<const SpherePoint> p2);

/// Vector-to-plane geodesic angle of p2 against the epipolar plane of p1.
double angular_epipolar_error(const Eigen::Matrix3d& e, const Eigen::Vector3d& p1, const Eigen::Vector3d& p2);
double symmetric_angular_epipolar_error(const Eigen::Matrix3d& e, const Eigen::Vector3d& p1,
                                        const Eigen::Vector3d& p2);

struct EssentialRansacResult {
  EssentialMatrix essential;
  std::vector<bool> inliers;
  int num_inliers = 0;
  int iterations = 0;
};

/// Throws NoConsensus when fewer than 8 correspondences exist or no model reaches 8 inliers.
EssentialRansacResult estimate_essential_ransac(std::span<const SpherePoint> p1,
                                                std::span<const SpherePoint> p2,
                                                const ImageDims& dims, const RansacParams& params);

struct Decomposition {
  RelativePose pose;
  /// Points passing cheirality in both cameras for (R1, T), (R1, -T), (R2, T), (R2, -T).
  std::array<int, 4> scores{};
  int chosen = 0;
};

/// Picks the candidate with the most points consistent with both rays
/// (ties go to the lower candidate index). Throws CheiralityFailure if all score 0.
Decomposition decompose_essential(const EssentialMatrix& e, std::span<const SpherePoint> p1,
                                  std::span<const SpherePoint> p2, const std::vector<bool>& inliers);

struct Triangulation {
  Eigen::Vector3d point;
  double angle = 0.0;  // largest intersection angle between observing rays, radians
};

/// Linear least squares on [p]x (R P + T) = 0 for both views.
/// Throws NoParallax (angle < 1e-6 rad) or BehindRay (cheirality violated).
Triangulation triangulate(const Pose& pose_a, const Pose& pose_b, const SpherePoint& p_a,
                          const SpherePoint& p_b);

/// Same construction over any number of views (at least two).
Triangulation triangulate_multiview(std::span<const Pose> poses, std::span<const SpherePoint> rays);

/// Refines (R, T) on the given inliers by minimizing the symmetric transfer cost.
RelativePose refine_relative_pose(const RelativePose& initial, std::span<const SpherePoint> p1,
                                  std::span<const SpherePoint> p2, const std::vector<bool>& inliers);

struct RelativeOrientation {
  EssentialMatrix essential;
  std::vector<bool> inliers;
  int num_inliers = 0;
  RelativePose pose;
};

/// RANSAC, decomposition with the spherical cheirality test, then refinement.
RelativeOrientation estimate_relative_orientation(std::span<const SpherePoint> p1,
                                                  std::span<const SpherePoint> p2,
                                                  const ImageDims& dims, const RansacParams& params);

}  // namespace sphsfm
