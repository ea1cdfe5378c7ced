#pragma once

// Absolute orientation of a spherical image from 2D-3D correspondences.

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "sphsfm/sphere_geometry.hpp"
#include "sphsfm/two_view.hpp"

namespace sphsfm {

struct Correspondence2D3D {
  SpherePoint ray;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  std::int64_t track_id = -1;
};

/// All real poses that place the three points on their rays with positive depth.
/// Throws Degenerate for collinear world points or coincident rays.
std::vector<Pose> p3p_solve(std::span<const Correspondence2D3D, 3> sample);

/// Angle between the observed ray and R P + T.
double angular_resection_error(const Pose& pose, const Correspondence2D3D& c);

struct PoseRansacResult {
  Pose pose;
  std::vector<bool> inliers;
  int num_inliers = 0;
  int iterations = 0;
  /// Sum of squared angular errors over the RANSAC consensus set, before and after refinement.
  double cost_before_refinement = 0.0;
  double cost_after_refinement = 0.0;
};

/// Refines a pose by minimizing the sum of squared angular errors over the given correspondences.
Pose refine_pose_angular(const Pose& initial, std::span<const Correspondence2D3D> corrs,
                         double* cost_before = nullptr, double* cost_after = nullptr);

/// Throws NoConsensus for fewer than 4 correspondences or when no model gets 4 inliers.
PoseRansacResult estimate_pose_ransac(std::span<const Correspondence2D3D> corrs, const ImageDims& dims,
                                      const RansacParams& params);

}  // namespace sphsfm
