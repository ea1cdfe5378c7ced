#pragma once

// Spherical reprojection costs and bundle adjustment.

#include <Eigen/Core>
#include <array>
#include <vector>

#include "sphsfm/least_squares.hpp"
#include "sphsfm/sphere_geometry.hpp"

namespace sphsfm {

/// (p2^T E p1)^2 / (|E p1|^2 + |E^T p2|^2).
double cost_trans(const Eigen::Matrix3d& e, const Eigen::Vector3d& p1, const Eigen::Vector3d& p2);

/// Projected minus observed pixel, horizontal component wrapped into (-W/2, W/2].
Eigen::Vector2d cost_rprj(const Pose& pose, const Eigen::Vector3d& point, const PixelCoord& observed,
                          const ImageDims& dims);

struct ReprojectionJacobian {
  Eigen::Vector2d residual;
  /// Columns: rotation increment omega (R <- exp(omega) R), then translation.
  Eigen::Matrix<double, 2, 6> d_pose;
  Eigen::Matrix<double, 2, 3> d_point;
};

ReprojectionJacobian cost_rprj_jacobian(const Pose& pose, const Eigen::Vector3d& point,
                                        const PixelCoord& observed, const ImageDims& dims);

/// Applies a (omega, dT) increment the same way the solver does.
Pose apply_pose_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta);

struct BaCamera {
  Pose pose;
  bool fixed = false;
  /// Individually frozen translation components (used to pin the scale gauge).
  std::array<bool, 3> fixed_translation{false, false, false};
};

struct BaPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  bool fixed = false;
};

struct BaObservation {
  int camera = 0;
  int point = 0;
  PixelCoord pixel;
  ImageDims dims;
};

struct RobustLoss {
  enum class Kind { None, Cauchy };
  Kind kind = Kind::None;
  double scale = 1.0;  // pixels
};

struct BaProblem {
  std::vector<BaCamera> cameras;
  std::vector<BaPoint> points;
  std::vector<BaObservation> observations;
  RobustLoss loss;
  /// Scale the horizontal residual by cos(phi) for observations beyond 89.9 deg latitude.
  bool pole_weighting = true;
};

struct BaOptions {
  int max_iterations = 100;
  double function_tolerance = 1e-8;
  DampingSchedule damping;
};

struct BaReport {
  double initial_cost = 0.0;  // squared pixels
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  double mean_reprojection_error = 0.0;  // pixels
  std::vector<double> cost_history;      // initial cost, then every accepted step
};

/// Throws InvalidArgument when indices are out of range, a free camera is
/// unobserved, or a free point has fewer than two observations.
void validate(const BaProblem& problem);

/// Sum over observations of the (weighted, robustified) squared residual norm.
double evaluate_cost(const BaProblem& problem);
double mean_reprojection_error(const BaProblem& problem);

/// Damped Gauss-Newton with the point blocks eliminated through the Schur
/// complement. Updates the problem in place. Throws NonFinite if the starting
/// cost is not finite.
BaReport solve(BaProblem& problem, const BaOptions& options = {});

}  // namespace sphsfm
