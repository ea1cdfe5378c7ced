#include "sphsfm/resection.hpp"

#include <Eigen/SVD>
#include <array>
#include <cmath>
#include <random>
#include <unsupported/Eigen/Polynomials>

#include "ransac_util.hpp"
#include "sphsfm/error.hpp"
#include "sphsfm/least_squares.hpp"
#include "sphsfm/rotation.hpp"

namespace sphsfm {

namespace {

using Poly = std::array<double, 5>;  // ascending powers

Poly mul(const Poly& a, const Poly& b) {
  Poly r{};
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; i + j < 5; ++j) r[i + j] += a[i] * b[j];
  }
  return r;
}

double eval(const Poly& p, double x) {
  double r = 0.0;
  for (int i = 4; i >= 0; --i) r = r * x + p[i];
  return r;
}

double eval_derivative(const Poly& p, double x) {
  double r = 0.0;
  for (int i = 4; i >= 1; --i) r = r * x + i * p[i];
  return r;
}

std::vector<double> real_roots(const Poly& p) {
  int degree = 4;
  const double scale = std::max({std::abs(p[0]), std::abs(p[1]), std::abs(p[2]), std::abs(p[3]),
                                 std::abs(p[4])});
  if (scale == 0.0) return {};
  while (degree > 0 && std::abs(p[degree]) < 1e-14 * scale) --degree;
  if (degree == 0) return {};
  Eigen::VectorXd coeffs(degree + 1);
  for (int i = 0; i <= degree; ++i) coeffs(i) = p[i] / scale;
  std::vector<double> roots;
  if (degree == 1) {
    roots.push_back(-coeffs(0) / coeffs(1));
  } else {
    Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(coeffs);
    for (int i = 0; i < solver.roots().size(); ++i) {
      const std::complex<double> r = solver.roots()(i);
      if (std::abs(r.imag()) <= 1e-6 * (1.0 + std::abs(r.real()))) roots.push_back(r.real());
    }
  }
  for (double& r : roots) {
    for (int it = 0; it < 4; ++it) {
      const double d = eval_derivative(p, r);
      if (d == 0.0) break;
      const double step = eval(p, r) / d;
      if (!std::isfinite(step)) break;
      r -= step;
    }
  }
  return roots;
}

// Newton refinement of the three depths on the law-of-cosines system.
void polish_depths(Eigen::Vector3d& s, const std::array<Eigen::Vector3d, 3>& f,
                   const std::array<Eigen::Vector3d, 3>& x) {
  const std::array<std::pair<int, int>, 3> edges = {std::pair{1, 2}, std::pair{0, 2}, std::pair{0, 1}};
  for (int it = 0; it < 3; ++it) {
    Eigen::Vector3d r;
    Eigen::Matrix3d j = Eigen::Matrix3d::Zero();
    for (int e = 0; e < 3; ++e) {
      const auto [a, b] = edges[e];
      const Eigen::Vector3d d = s(a) * f[a] - s(b) * f[b];
      r(e) = d.squaredNorm() - (x[a] - x[b]).squaredNorm();
      j(e, a) = 2.0 * d.dot(f[a]);
      j(e, b) = -2.0 * d.dot(f[b]);
    }
    const Eigen::Vector3d step = j.fullPivLu().solve(r);
    if (!step.allFinite()) return;
    s -= step;
  }
}

// Rigid transform with cam = R * world + T from three exact pairs.
Pose align_three(const std::array<Eigen::Vector3d, 3>& world, const std::array<Eigen::Vector3d, 3>& cam) {
  const Eigen::Vector3d cw = (world[0] + world[1] + world[2]) / 3.0;
  const Eigen::Vector3d cc = (cam[0] + cam[1] + cam[2]) / 3.0;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) h += (cam[i] - cc) * (world[i] - cw).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = project_to_rotation(svd.matrixU() * d * svd.matrixV().transpose());
  return Pose(r, cc - r * cw);
}

}  // namespace

std::vector<Pose> p3p_solve(std::span<const Correspondence2D3D, 3> sample) {
  std::array<Eigen::Vector3d, 3> f, x;
  for (int i = 0; i < 3; ++i) {
    f[i] = sample[i].ray.vec();
    x[i] = sample[i].point;
  }
  const Eigen::Vector3d e1 = x[1] - x[0];
  const Eigen::Vector3d e2 = x[2] - x[0];
  if (e1.cross(e2).norm() <= 1e-9 * e1.norm() * e2.norm() || e1.norm() == 0.0 || e2.norm() == 0.0) {
    throw Error(ErrorCode::Degenerate, "P3P world points are collinear");
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (angle_between(f[i], f[j]) < 1e-9) throw Error(ErrorCode::Degenerate, "P3P rays coincide");
    }
  }
  // Side lengths opposite each ray pair and the cosines of the ray angles.
  const double a2 = (x[1] - x[2]).squaredNorm();
  const double b2 = (x[0] - x[2]).squaredNorm();
  const double c2 = (x[0] - x[1]).squaredNorm();
  const double ca = f[1].dot(f[2]);
  const double cb = f[0].dot(f[2]);
  const double cg = f[0].dot(f[1]);

  // Depths s2 = u s1, s3 = v s1. Eliminating u leaves a quartic in v:
  //   u = N(v) / D(v), b^2 (D^2 + N^2 - 2 cg N D) - c^2 Q D^2 = 0.
  const double k = a2 - c2;
  const Poly q{1.0, -2.0 * cb, 1.0, 0.0, 0.0};
  const Poly num{k + b2, -2.0 * cb * k, k - b2, 0.0, 0.0};
  const Poly den{2.0 * b2 * cg, -2.0 * b2 * ca, 0.0, 0.0, 0.0};
  const Poly dd = mul(den, den);
  const Poly nn = mul(num, num);
  const Poly nd = mul(num, den);
  const Poly qdd = mul(q, dd);
  Poly quartic{};
  for (int i = 0; i < 5; ++i) quartic[i] = b2 * (dd[i] + nn[i] - 2.0 * cg * nd[i]) - c2 * qdd[i];

  std::vector<Pose> poses;
  for (double v : real_roots(quartic)) {
    if (!(v > 0.0)) continue;
    const double qv = eval(q, v);
    const double dv = eval(den, v);
    if (!(qv > 0.0) || std::abs(dv) < 1e-14 * b2) continue;
    const double u = eval(num, v) / dv;
    if (!(u > 0.0)) continue;
    const double s1 = std::sqrt(b2 / qv);
    Eigen::Vector3d depth(s1, u * s1, v * s1);
    polish_depths(depth, f, x);
    if (!(depth.minCoeff() > 0.0) || !depth.allFinite()) continue;
    const std::array<Eigen::Vector3d, 3> cam = {depth(0) * f[0], depth(1) * f[1], depth(2) * f[2]};
    const Pose pose = align_three(x, cam);
    bool consistent = true;
    for (int i = 0; i < 3; ++i) {
      const Eigen::Vector3d pc = pose.transform(x[i]);
      consistent = consistent && angle_between(pc, f[i]) < 1e-6;
    }
    if (consistent) poses.push_back(pose);
  }
  return poses;
}

double angular_resection_error(const Pose& pose, const Correspondence2D3D& c) {
  const Eigen::Vector3d p = pose.transform(c.point);
  const double n = p.norm();
  if (!(n > kDepthEpsilon)) {
    throw Error(ErrorCode::ProjectionAtCenter, "point coincides with the camera center");
  }
  return angle_between(c.ray.vec(), p);
}

namespace {

// Residual per correspondence is the 2-vector log map of the predicted direction
// in the tangent plane of the observed ray; its norm is the angular error.
class AngularPoseProblem {
 public:
  static constexpr int kDof = 6;

  AngularPoseProblem(const Pose& pose, std::span<const Correspondence2D3D> corrs)
      : rotation_(pose.rotation()), translation_(pose.translation()) {
    for (const auto& c : corrs) {
      Eigen::Vector3d b1, b2;
      tangent_basis(c.ray.vec(), b1, b2);
      obs_.push_back({c.ray.vec(), b1, b2, c.point});
    }
  }

  int num_residuals() const { return 2 * static_cast<int>(obs_.size()); }

  template <typename T>
  void residuals(const Eigen::Matrix<T, kDof, 1>& delta, T* out) const {
    using Vec3 = Eigen::Matrix<T, 3, 1>;
    using Mat3 = Eigen::Matrix<T, 3, 3>;
    using std::atan2;
    using std::sqrt;
    const Vec3 omega(delta(0), delta(1), delta(2));
    const Mat3 r = (Mat3::Identity() + skew<T>(omega)) * rotation_.cast<T>();
    const Vec3 t = translation_.cast<T>() + Vec3(delta(3), delta(4), delta(5));
    for (size_t k = 0; k < obs_.size(); ++k) {
      const Obs& o = obs_[k];
      Vec3 p = r * o.point.cast<T>() + t;
      p /= sqrt(p.squaredNorm());
      const T u = p.dot(o.b1.cast<T>());
      const T v = p.dot(o.b2.cast<T>());
      const T c = p.dot(o.ray.cast<T>());
      const T s = sqrt(u * u + v * v + T(1e-300));
      const T factor = s > T(1e-12) ? T(atan2(s, c) / s) : T(1.0);
      out[2 * k] = factor * u;
      out[2 * k + 1] = factor * v;
    }
  }

  void retract(const Eigen::Matrix<double, kDof, 1>& delta) {
    rotation_ = project_to_rotation(exp_so3(delta.head<3>()) * rotation_);
    translation_ += delta.tail<3>();
  }

  Pose pose() const { return Pose(rotation_, translation_); }

 private:
  struct Obs {
    Eigen::Vector3d ray, b1, b2, point;
  };
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
  std::vector<Obs> obs_;
};

double angular_cost(const Pose& pose, std::span<const Correspondence2D3D> corrs) {
  double cost = 0.0;
  for (const auto& c : corrs) {
    const double e = angular_resection_error(pose, c);
    cost += e * e;
  }
  return cost;
}

}  // namespace

Pose refine_pose_angular(const Pose& initial, std::span<const Correspondence2D3D> corrs,
                         double* cost_before, double* cost_after) {
  const double before = angular_cost(initial, corrs);
  Pose result = initial;
  if (corrs.size() >= 3) {
    AngularPoseProblem problem(initial, corrs);
    solve_dense(problem);
    const Pose refined = problem.pose();
    if (angular_cost(refined, corrs) <= before) result = refined;
  }
  if (cost_before) *cost_before = before;
  if (cost_after) *cost_after = angular_cost(result, corrs);
  return result;
}

PoseRansacResult estimate_pose_ransac(std::span<const Correspondence2D3D> corrs, const ImageDims& dims,
                                      const RansacParams& params) {
  validate(params);
  const int n = static_cast<int>(corrs.size());
  if (n < 4) throw Error(ErrorCode::NoConsensus, "resection needs at least 4 correspondences");
  const double threshold = pixel_threshold_to_angle(params.e_p, dims);

  auto score = [&](const Pose& pose, std::vector<bool>* mask, double* err_sum) {
    int count = 0;
    double sum = 0.0;
    if (mask) mask->assign(corrs.size(), false);
    for (int k = 0; k < n; ++k) {
      double e;
      try {
        e = angular_resection_error(pose, corrs[k]);
      } catch (const Error&) {
        continue;
      }
      if (e < threshold) {
        ++count;
        sum += e;
        if (mask) (*mask)[k] = true;
      }
    }
    if (err_sum) *err_sum = sum;
    return count;
  };

  std::mt19937_64 rng(params.rng_seed);
  std::vector<int> sample;
  bool have_model = false;
  Pose best_pose;
  int best_count = 0;
  double best_sum = 0.0;
  long needed = params.max_iterations;
  int iter = 0;
  for (; iter < params.max_iterations && iter < needed; ++iter) {
    detail::sample_distinct(rng, n, 4, sample);
    const std::array<Correspondence2D3D, 3> minimal = {corrs[sample[0]], corrs[sample[1]],
                                                       corrs[sample[2]]};
    std::vector<Pose> candidates;
    try {
      candidates = p3p_solve(std::span<const Correspondence2D3D, 3>(minimal));
    } catch (const Error&) {
      continue;
    }
    for (const Pose& candidate : candidates) {
      double check;
      try {
        check = angular_resection_error(candidate, corrs[sample[3]]);
      } catch (const Error&) {
        continue;
      }
      if (!(check < threshold)) continue;
      double sum = 0.0;
      const int count = score(candidate, nullptr, &sum);
      if (!have_model || count > best_count || (count == best_count && sum < best_sum)) {
        have_model = true;
        best_pose = candidate;
        best_count = count;
        best_sum = sum;
        needed = detail::required_iterations(static_cast<double>(count) / n, 4, params.confidence,
                                             params.max_iterations);
      }
    }
  }
  if (!have_model || best_count < 4) {
    throw Error(ErrorCode::NoConsensus, "no pose supported by 4 or more correspondences");
  }

  PoseRansacResult result;
  result.iterations = iter;
  score(best_pose, &result.inliers, nullptr);
  std::vector<Correspondence2D3D> consensus;
  for (int k = 0; k < n; ++k) {
    if (result.inliers[k]) consensus.push_back(corrs[k]);
  }
  result.pose = refine_pose_angular(best_pose, consensus, &result.cost_before_refinement,
                                    &result.cost_after_refinement);
  result.num_inliers = score(result.pose, &result.inliers, nullptr);
  if (result.num_inliers < best_count) {
    result.pose = best_pose;
    result.num_inliers = score(best_pose, &result.inliers, nullptr);
    result.cost_after_refinement = result.cost_before_refinement;
  }
  return result;
}

}  // namespace sphsfm
