#include "sphsfm/bundle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>

#include "sphsfm/error.hpp"
#include "sphsfm/rotation.hpp"

namespace sphsfm {

namespace {

constexpr double kPoleLatitude = 89.9 * M_PI / 180.0;

double wrap_horizontal(double dx, double width) {
  double r = std::fmod(dx, width);
  if (r > width / 2) r -= width;
  if (r <= -width / 2) r += width;
  return r;
}

double horizontal_weight(const BaProblem& problem, const BaObservation& obs) {
  if (!problem.pole_weighting) return 1.0;
  const double phi = (obs.dims.height / 2.0 - obs.pixel.iy) * M_PI / obs.dims.height;
  return std::abs(phi) > kPoleLatitude ? std::cos(phi) : 1.0;
}

// Returns rho(s) and sqrt(rho'(s)) for squared norm s.
std::pair<double, double> robustify(const RobustLoss& loss, double s) {
  if (loss.kind == RobustLoss::Kind::None) return {s, 1.0};
  const double b2 = loss.scale * loss.scale;
  return {b2 * std::log1p(s / b2), std::sqrt(1.0 / (1.0 + s / b2))};
}

}  // namespace

double cost_trans(const Eigen::Matrix3d& e, const Eigen::Vector3d& p1, const Eigen::Vector3d& p2) {
  const double num = p2.dot(e * p1);
  const double den = (e * p1).squaredNorm() + (e.transpose() * p2).squaredNorm();
  if (den == 0.0) {
    if (num == 0.0) return 0.0;
    throw Error(ErrorCode::Degenerate, "transfer cost has a zero denominator");
  }
  return num * num / den;
}

Eigen::Vector2d cost_rprj(const Pose& pose, const Eigen::Vector3d& point, const PixelCoord& observed,
                          const ImageDims& dims) {
  const PixelCoord projected = project_to_pixel(point, pose, Intrinsics(dims));
  return {wrap_horizontal(projected.ix - observed.ix, dims.width), projected.iy - observed.iy};
}

ReprojectionJacobian cost_rprj_jacobian(const Pose& pose, const Eigen::Vector3d& point,
                                        const PixelCoord& observed, const ImageDims& dims) {
  ReprojectionJacobian out;
  out.residual = cost_rprj(pose, point, observed, dims);
  const Eigen::Vector3d rx = pose.rotation() * point;
  const Eigen::Vector3d p = rx + pose.translation();
  const double x = p.x(), y = p.y(), z = p.z();
  const double rho2 = std::max(x * x + z * z, 1e-300);
  const double rho = std::sqrt(rho2);
  const double n2 = rho2 + y * y;
  const Eigen::RowVector3d d_theta(z / rho2, 0.0, -x / rho2);
  const Eigen::RowVector3d d_phi(y * x / rho / n2, -rho / n2, y * z / rho / n2);
  Eigen::Matrix<double, 2, 3> d_pixel;
  d_pixel.row(0) = d_theta * (dims.width / (2.0 * M_PI));
  d_pixel.row(1) = d_phi * (-dims.height / M_PI);
  out.d_pose.leftCols<3>() = -d_pixel * skew<double>(rx);
  out.d_pose.rightCols<3>() = d_pixel;
  out.d_point = d_pixel * pose.rotation();
  return out;
}

Pose apply_pose_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  const Eigen::Matrix3d r = project_to_rotation(exp_so3(delta.head<3>()) * pose.rotation());
  return Pose(r, pose.translation() + delta.tail<3>());
}

void validate(const BaProblem& problem) {
  const int nc = static_cast<int>(problem.cameras.size());
  const int np = static_cast<int>(problem.points.size());
  std::vector<int> cam_obs(nc, 0), point_obs(np, 0);
  for (const auto& obs : problem.observations) {
    if (obs.camera < 0 || obs.camera >= nc || obs.point < 0 || obs.point >= np) {
      throw Error(ErrorCode::InvalidArgument, "observation index out of range");
    }
    validate(obs.dims);
    ++cam_obs[obs.camera];
    ++point_obs[obs.point];
  }
  for (int c = 0; c < nc; ++c) {
    if (!problem.cameras[c].fixed && cam_obs[c] < 1) {
      throw Error(ErrorCode::InvalidArgument, "free camera without observations");
    }
  }
  for (int p = 0; p < np; ++p) {
    if (!problem.points[p].fixed && point_obs[p] < 2) {
      throw Error(ErrorCode::InvalidArgument, "free point with fewer than two observations");
    }
  }
}

double evaluate_cost(const BaProblem& problem) {
  double cost = 0.0;
  for (const auto& obs : problem.observations) {
    Eigen::Vector2d r;
    try {
      r = cost_rprj(problem.cameras[obs.camera].pose, problem.points[obs.point].position, obs.pixel,
                    obs.dims);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
    r.x() *= horizontal_weight(problem, obs);
    cost += robustify(problem.loss, r.squaredNorm()).first;
  }
  return cost;
}

double mean_reprojection_error(const BaProblem& problem) {
  if (problem.observations.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& obs : problem.observations) {
    sum += cost_rprj(problem.cameras[obs.camera].pose, problem.points[obs.point].position, obs.pixel,
                     obs.dims)
               .norm();
  }
  return sum / static_cast<double>(problem.observations.size());
}

namespace {

struct Linearization {
  Eigen::MatrixXd u;                  // camera-camera block, 6 per free camera
  Eigen::VectorXd g_cam;
  std::vector<Eigen::Matrix3d> v;     // per free point
  std::vector<Eigen::Vector3d> g_point;
  std::vector<Eigen::Matrix<double, 6, 3>> w;  // per observation (free camera, free point)
};

class SchurSolver {
 public:
  explicit SchurSolver(const BaProblem& problem) : problem_(problem) {
    camera_block_.assign(problem.cameras.size(), -1);
    point_block_.assign(problem.points.size(), -1);
    for (size_t c = 0; c < problem.cameras.size(); ++c) {
      if (!problem.cameras[c].fixed) camera_block_[c] = num_cameras_++;
    }
    for (size_t p = 0; p < problem.points.size(); ++p) {
      if (!problem.points[p].fixed) point_block_[p] = num_points_++;
    }
    point_observations_.resize(num_points_);
    for (size_t k = 0; k < problem.observations.size(); ++k) {
      const int pb = point_block_[problem.observations[k].point];
      if (pb >= 0) point_observations_[pb].push_back(static_cast<int>(k));
    }
  }

  void linearize(Linearization& lin) const {
    const int nc = 6 * num_cameras_;
    lin.u = Eigen::MatrixXd::Zero(nc, nc);
    lin.g_cam = Eigen::VectorXd::Zero(nc);
    lin.v.assign(num_points_, Eigen::Matrix3d::Zero());
    lin.g_point.assign(num_points_, Eigen::Vector3d::Zero());
    lin.w.assign(problem_.observations.size(), Eigen::Matrix<double, 6, 3>::Zero());
    for (size_t k = 0; k < problem_.observations.size(); ++k) {
      const BaObservation& obs = problem_.observations[k];
      const BaCamera& cam = problem_.cameras[obs.camera];
      ReprojectionJacobian j =
          cost_rprj_jacobian(cam.pose, problem_.points[obs.point].position, obs.pixel, obs.dims);
      const double hw = horizontal_weight(problem_, obs);
      j.residual.x() *= hw;
      j.d_pose.row(0) *= hw;
      j.d_point.row(0) *= hw;
      const double scale = robustify(problem_.loss, j.residual.squaredNorm()).second;
      j.residual *= scale;
      j.d_pose *= scale;
      j.d_point *= scale;
      for (int a = 0; a < 3; ++a) {
        if (cam.fixed_translation[a]) j.d_pose.col(3 + a).setZero();
      }
      const int cb = camera_block_[obs.camera];
      const int pb = point_block_[obs.point];
      if (cb >= 0) {
        lin.u.block<6, 6>(6 * cb, 6 * cb) += j.d_pose.transpose() * j.d_pose;
        lin.g_cam.segment<6>(6 * cb) += j.d_pose.transpose() * j.residual;
      }
      if (pb >= 0) {
        lin.v[pb] += j.d_point.transpose() * j.d_point;
        lin.g_point[pb] += j.d_point.transpose() * j.residual;
      }
      if (cb >= 0 && pb >= 0) lin.w[k] = j.d_pose.transpose() * j.d_point;
    }
  }

  // Solves the damped system; returns false if the reduced matrix is not positive definite.
  bool solve_step(const Linearization& lin, double lambda, Eigen::VectorXd& d_cam,
                  std::vector<Eigen::Vector3d>& d_point) const {
    const int nc = 6 * num_cameras_;
    Eigen::MatrixXd s = lin.u;
    Eigen::VectorXd rhs = -lin.g_cam;
    for (int i = 0; i < nc; ++i) s(i, i) += lambda * std::clamp(lin.u(i, i), 1e-6, 1e32);
    for (int c = 0; c < num_cameras_; ++c) {
      for (int i = 0; i < 6; ++i) {
        if (s(6 * c + i, 6 * c + i) == 0.0) s(6 * c + i, 6 * c + i) = 1.0;
      }
    }
    std::vector<Eigen::Matrix3d> v_inv(num_points_);
    for (int p = 0; p < num_points_; ++p) {
      Eigen::Matrix3d v = lin.v[p];
      for (int i = 0; i < 3; ++i) v(i, i) += lambda * std::clamp(lin.v[p](i, i), 1e-6, 1e32);
      Eigen::FullPivLU<Eigen::Matrix3d> lu(v);
      if (!lu.isInvertible()) return false;
      v_inv[p] = lu.inverse();
      const auto& obs_list = point_observations_[p];
      for (int a : obs_list) {
        const int ca = camera_block_[problem_.observations[a].camera];
        if (ca < 0) continue;
        const Eigen::Matrix<double, 6, 3> wv = lin.w[a] * v_inv[p];
        rhs.segment<6>(6 * ca) += wv * lin.g_point[p];
        for (int b : obs_list) {
          const int cbk = camera_block_[problem_.observations[b].camera];
          if (cbk < 0) continue;
          s.block<6, 6>(6 * ca, 6 * cbk) -= wv * lin.w[b].transpose();
        }
      }
    }
    if (nc > 0) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
      d_cam = ldlt.solve(rhs);
      if (!d_cam.allFinite()) return false;
    } else {
      d_cam.resize(0);
    }
    d_point.assign(num_points_, Eigen::Vector3d::Zero());
    for (int p = 0; p < num_points_; ++p) {
      Eigen::Vector3d r = -lin.g_point[p];
      for (int a : point_observations_[p]) {
        const int ca = camera_block_[problem_.observations[a].camera];
        if (ca >= 0) r -= lin.w[a].transpose() * d_cam.segment<6>(6 * ca);
      }
      d_point[p] = v_inv[p] * r;
      if (!d_point[p].allFinite()) return false;
    }
    return true;
  }

  BaProblem apply(const BaProblem& base, const Eigen::VectorXd& d_cam,
                  const std::vector<Eigen::Vector3d>& d_point) const {
    BaProblem out = base;
    for (size_t c = 0; c < base.cameras.size(); ++c) {
      const int cb = camera_block_[c];
      if (cb < 0) continue;
      Eigen::Matrix<double, 6, 1> delta = d_cam.segment<6>(6 * cb);
      for (int a = 0; a < 3; ++a) {
        if (base.cameras[c].fixed_translation[a]) delta(3 + a) = 0.0;
      }
      out.cameras[c].pose = apply_pose_increment(base.cameras[c].pose, delta);
    }
    for (size_t p = 0; p < base.points.size(); ++p) {
      const int pb = point_block_[p];
      if (pb >= 0) out.points[p].position += d_point[pb];
    }
    return out;
  }

 private:
  const BaProblem& problem_;
  std::vector<int> camera_block_, point_block_;
  std::vector<std::vector<int>> point_observations_;
  int num_cameras_ = 0;
  int num_points_ = 0;
};

}  // namespace

BaReport solve(BaProblem& problem, const BaOptions& options) {
  validate(problem);
  BaReport report;
  double cost = evaluate_cost(problem);
  if (!std::isfinite(cost)) throw Error(ErrorCode::NonFinite, "bundle adjustment starting cost");
  report.initial_cost = cost;
  report.cost_history.push_back(cost);

  double lambda = options.damping.initial;
  Linearization lin;
  bool relinearize = true;
  Eigen::VectorXd d_cam;
  std::vector<Eigen::Vector3d> d_point;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (cost <= 1e-20) {
      report.converged = true;
      break;
    }
    SchurSolver solver(problem);
    if (relinearize) {
      solver.linearize(lin);
      relinearize = false;
    }
    ++report.iterations;
    if (!solver.solve_step(lin, lambda, d_cam, d_point)) {
      lambda *= options.damping.increase;
      if (lambda > options.damping.max) break;
      continue;
    }
    BaProblem trial = solver.apply(problem, d_cam, d_point);
    const double trial_cost = evaluate_cost(trial);
    if (std::isfinite(trial_cost) && trial_cost < cost) {
      const double previous = cost;
      problem = std::move(trial);
      cost = trial_cost;
      report.cost_history.push_back(cost);
      lambda = std::max(lambda / options.damping.decrease, 1e-12);
      relinearize = true;
      if (previous - cost <= options.function_tolerance * previous) {
        report.converged = true;
        break;
      }
    } else {
      lambda *= options.damping.increase;
      if (lambda > options.damping.max) {
        // No descent direction left at machine precision.
        report.converged = true;
        break;
      }
    }
  }
  report.final_cost = cost;
  report.mean_reprojection_error = mean_reprojection_error(problem);
  return report;
}

}  // namespace sphsfm
