#include "sphsfm/two_view.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <random>

#include "ransac_util.hpp"
#include "sphsfm/bundle.hpp"
#include "sphsfm/error.hpp"
#include "sphsfm/least_squares.hpp"
#include "sphsfm/rotation.hpp"

namespace sphsfm {

void validate(const RansacParams& params) {
  if (!(params.e_p > 0.0)) throw Error(ErrorCode::InvalidArgument, "e_p must be positive");
  if (!(params.confidence > 0.0 && params.confidence < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "confidence must lie in (0, 1)");
  }
  if (params.max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "max_iterations < 1");
}

double pixel_threshold_to_angle(double e_p, const ImageDims& dims) {
  return 2.0 * M_PI * e_p / static_cast<double>(dims.max_side());
}

EssentialMatrix EssentialMatrix::project(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (!(svd.singularValues()(0) > 0.0)) throw Error(ErrorCode::Degenerate, "zero essential matrix");
  const Eigen::Vector3d s(1.0, 1.0, 0.0);
  return EssentialMatrix(svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose());
}

EssentialMatrix EssentialMatrix::from_motion(const Eigen::Matrix3d& rotation,
                                             const Eigen::Vector3d& translation) {
  const double n = translation.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::Degenerate, "zero baseline has no essential matrix");
  return EssentialMatrix(skew<double>(translation / n) * rotation);
}

EssentialMatrix essential_8point(std::span<const SpherePoint> p1, std::span<const SpherePoint> p2) {
  if (p1.size() != p2.size()) throw Error(ErrorCode::InvalidArgument, "correspondence size mismatch");
  if (p1.size() < 8) throw Error(ErrorCode::Degenerate, "eight-point needs at least 8 correspondences");
  const int n = static_cast<int>(p1.size());
  Eigen::Matrix<double, Eigen::Dynamic, 9> a(std::max(n, 9), 9);
  a.setZero();
  for (int k = 0; k < n; ++k) {
    const Eigen::Vector3d& x1 = p1[k].vec();
    const Eigen::Vector3d& x2 = p2[k].vec();
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) a(k, 3 * i + j) = x2(i) * x1(j);
    }
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, Eigen::Dynamic, 9>> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(7) < 1e-9 * sv(0)) {
    throw Error(ErrorCode::Degenerate, "eight-point system has no unique solution");
  }
  const Eigen::Matrix<double, 9, 1> e = svd.matrixV().col(8);
  Eigen::Matrix3d m;
  m << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  return EssentialMatrix::project(m);
}

double angular_epipolar_error(const Eigen::Matrix3d& e, const Eigen::Vector3d& p1,
                              const Eigen::Vector3d& p2) {
  const Eigen::Vector3d normal = e * p1;
  const double n = normal.norm();
  if (n < 1e-15) return M_PI / 2;
  return std::abs(std::asin(std::clamp(p2.dot(normal) / n, -1.0, 1.0)));
}

double symmetric_angular_epipolar_error(const Eigen::Matrix3d& e, const Eigen::Vector3d& p1,
                                        const Eigen::Vector3d& p2) {
  return std::max(angular_epipolar_error(e, p1, p2), angular_epipolar_error(e.transpose(), p2, p1));
}

namespace {

struct Score {
  int count = 0;
  double error_sum = 0.0;
};

Score score_model(const Eigen::Matrix3d& e, std::span<const SpherePoint> p1,
                  std::span<const SpherePoint> p2, double threshold, bool symmetric,
                  std::vector<bool>* mask) {
  Score s;
  if (mask) mask->assign(p1.size(), false);
  for (size_t k = 0; k < p1.size(); ++k) {
    const double err = symmetric ? symmetric_angular_epipolar_error(e, p1[k].vec(), p2[k].vec())
                                 : angular_epipolar_error(e, p1[k].vec(), p2[k].vec());
    if (err < threshold) {
      ++s.count;
      s.error_sum += err;
      if (mask) (*mask)[k] = true;
    }
  }
  return s;
}

bool better(const Score& a, const Score& b) {
  return a.count > b.count || (a.count == b.count && a.error_sum < b.error_sum);
}

template <typename T>
std::vector<T> select(std::span<const T> v, const std::vector<bool>& mask) {
  std::vector<T> out;
  for (size_t k = 0; k < v.size(); ++k) {
    if (mask[k]) out.push_back(v[k]);
  }
  return out;
}

}  // namespace

EssentialRansacResult estimate_essential_ransac(std::span<const SpherePoint> p1,
                                                std::span<const SpherePoint> p2,
                                                const ImageDims& dims, const RansacParams& params) {
  validate(params);
  if (p1.size() != p2.size()) throw Error(ErrorCode::InvalidArgument, "correspondence size mismatch");
  const int n = static_cast<int>(p1.size());
  if (n < 8) throw Error(ErrorCode::NoConsensus, "fewer than 8 correspondences");
  const double threshold = pixel_threshold_to_angle(params.e_p, dims);

  std::mt19937_64 rng(params.rng_seed);
  std::vector<int> sample;
  std::vector<SpherePoint> s1(8), s2(8);
  Score best;
  Eigen::Matrix3d best_e = Eigen::Matrix3d::Zero();
  bool have_model = false;
  long needed = params.max_iterations;
  int iter = 0;
  for (; iter < params.max_iterations && iter < needed; ++iter) {
    detail::sample_distinct(rng, n, 8, sample);
    for (int k = 0; k < 8; ++k) {
      s1[k] = p1[sample[k]];
      s2[k] = p2[sample[k]];
    }
    EssentialMatrix model;
    try {
      model = essential_8point(s1, s2);
    } catch (const Error&) {
      continue;
    }
    const Score s = score_model(model.matrix(), p1, p2, threshold, params.symmetric_error, nullptr);
    if (!have_model || better(s, best)) {
      have_model = true;
      best = s;
      best_e = model.matrix();
      needed = detail::required_iterations(static_cast<double>(best.count) / n, 8, params.confidence,
                                           params.max_iterations);
    }
  }
  if (!have_model || best.count < 8) {
    throw Error(ErrorCode::NoConsensus, "no essential matrix supported by 8 or more correspondences");
  }

  EssentialRansacResult result;
  result.iterations = iter;
  score_model(best_e, p1, p2, threshold, params.symmetric_error, &result.inliers);
  // Re-estimate on the consensus set while that does not lose support.
  for (int round = 0; round < 5; ++round) {
    EssentialMatrix refit;
    try {
      refit = essential_8point(select(p1, result.inliers), select(p2, result.inliers));
    } catch (const Error&) {
      break;
    }
    std::vector<bool> mask;
    const Score s = score_model(refit.matrix(), p1, p2, threshold, params.symmetric_error, &mask);
    if (s.count < best.count || (s.count == best.count && s.error_sum >= best.error_sum)) break;
    best = s;
    best_e = refit.matrix();
    result.inliers = std::move(mask);
  }
  result.essential = EssentialMatrix::project(best_e);
  result.num_inliers = best.count;
  return result;
}

Decomposition decompose_essential(const EssentialMatrix& e, std::span<const SpherePoint> p1,
                                  std::span<const SpherePoint> p2, const std::vector<bool>& inliers) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(e.matrix(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d v = svd.matrixV();
  if (u.determinant() < 0.0) u.col(2) = -u.col(2);
  if (v.determinant() < 0.0) v.col(2) = -v.col(2);
  Eigen::Matrix3d w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Eigen::Matrix3d r1 = u * w * v.transpose();
  const Eigen::Matrix3d r2 = u * w.transpose() * v.transpose();
  const Eigen::Vector3d t = u.col(2).normalized();
  const std::array<std::pair<Eigen::Matrix3d, Eigen::Vector3d>, 4> candidates = {
      std::pair{r1, t}, std::pair{r1, Eigen::Vector3d(-t)}, std::pair{r2, t},
      std::pair{r2, Eigen::Vector3d(-t)}};

  Decomposition result;
  const Pose identity;
  for (int c = 0; c < 4; ++c) {
    const Pose pose_b(candidates[c].first, candidates[c].second);
    int count = 0;
    for (size_t k = 0; k < p1.size(); ++k) {
      if (k < inliers.size() && !inliers[k]) continue;
      try {
        triangulate(identity, pose_b, p1[k], p2[k]);
        ++count;
      } catch (const Error&) {
      }
    }
    result.scores[c] = count;
  }
  int chosen = 0;
  for (int c = 1; c < 4; ++c) {
    if (result.scores[c] > result.scores[chosen]) chosen = c;
  }
  if (result.scores[chosen] == 0) {
    throw Error(ErrorCode::CheiralityFailure, "no decomposition candidate places points on their rays");
  }
  result.chosen = chosen;
  result.pose.rotation = candidates[chosen].first;
  result.pose.translation = candidates[chosen].second;
  return result;
}

Triangulation triangulate_multiview(std::span<const Pose> poses, std::span<const SpherePoint> rays) {
  if (poses.size() != rays.size() || poses.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "triangulation needs matching poses and rays, at least two");
  }
  const size_t n = poses.size();
  std::vector<Eigen::Vector3d> centers(n), directions(n);
  for (size_t k = 0; k < n; ++k) {
    centers[k] = poses[k].center();
    directions[k] = poses[k].rotation().transpose() * rays[k].vec();
  }
  double ray_spread = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      ray_spread = std::max(ray_spread, angle_between(directions[i], directions[j]));
    }
  }
  if (ray_spread < 1e-6) throw Error(ErrorCode::NoParallax, "observing rays are parallel");

  Eigen::MatrixXd a(3 * n, 3);
  Eigen::VectorXd b(3 * n);
  for (size_t k = 0; k < n; ++k) {
    const Eigen::Matrix3d px = skew<double>(rays[k].vec());
    a.block<3, 3>(3 * k, 0) = px * poses[k].rotation();
    b.segment<3>(3 * k) = -px * poses[k].translation();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.singularValues()(2) < 1e-12 * svd.singularValues()(0)) {
    throw Error(ErrorCode::NoParallax, "triangulation system is rank deficient");
  }
  Triangulation result;
  result.point = svd.solve(b);

  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      result.angle = std::max(result.angle,
                              angle_between(result.point - centers[i], result.point - centers[j]));
    }
  }
  if (!(result.angle >= 1e-6)) throw Error(ErrorCode::NoParallax, "intersection angle below 1e-6 rad");
  for (size_t k = 0; k < n; ++k) {
    if (!(rays[k].vec().dot(poses[k].transform(result.point)) > 0.0)) {
      throw Error(ErrorCode::BehindRay, "triangulated point lies opposite an observing ray");
    }
  }
  return result;
}

Triangulation triangulate(const Pose& pose_a, const Pose& pose_b, const SpherePoint& p_a,
                          const SpherePoint& p_b) {
  const std::array<Pose, 2> poses = {pose_a, pose_b};
  const std::array<SpherePoint, 2> rays = {p_a, p_b};
  return triangulate_multiview(poses, rays);
}

namespace {

// Rotation increment (3) and a tangent-plane step of the unit baseline (2).
class RelativePoseProblem {
 public:
  static constexpr int kDof = 5;

  RelativePoseProblem(const RelativePose& pose, std::vector<Eigen::Vector3d> p1,
                      std::vector<Eigen::Vector3d> p2)
      : rotation_(pose.rotation), translation_(pose.translation.normalized()), p1_(std::move(p1)),
        p2_(std::move(p2)) {
    tangent_basis(translation_, b1_, b2_);
  }

  int num_residuals() const { return static_cast<int>(p1_.size()); }

  template <typename T>
  void residuals(const Eigen::Matrix<T, kDof, 1>& delta, T* out) const {
    using Vec3 = Eigen::Matrix<T, 3, 1>;
    using Mat3 = Eigen::Matrix<T, 3, 3>;
    const Vec3 omega(delta(0), delta(1), delta(2));
    const Mat3 r = (Mat3::Identity() + skew<T>(omega)) * rotation_.cast<T>();
    const Vec3 t = translation_.cast<T>() + b1_.cast<T>() * delta(3) + b2_.cast<T>() * delta(4);
    const Mat3 e = skew<T>(t) * r;
    for (size_t k = 0; k < p1_.size(); ++k) {
      const Vec3 x1 = p1_[k].cast<T>();
      const Vec3 x2 = p2_[k].cast<T>();
      const Vec3 ex1 = e * x1;
      const Vec3 etx2 = e.transpose() * x2;
      using std::sqrt;
      out[k] = x2.dot(ex1) / sqrt(ex1.squaredNorm() + etx2.squaredNorm());
    }
  }

  void retract(const Eigen::Matrix<double, kDof, 1>& delta) {
    rotation_ = exp_so3(delta.head<3>()) * rotation_;
    translation_ = (translation_ + b1_ * delta(3) + b2_ * delta(4)).normalized();
    tangent_basis(translation_, b1_, b2_);
  }

  RelativePose pose() const { return {rotation_, translation_}; }

 private:
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
  Eigen::Vector3d b1_, b2_;
  std::vector<Eigen::Vector3d> p1_, p2_;
};

}  // namespace

RelativePose refine_relative_pose(const RelativePose& initial, std::span<const SpherePoint> p1,
                                  std::span<const SpherePoint> p2, const std::vector<bool>& inliers) {
  std::vector<Eigen::Vector3d> x1, x2;
  for (size_t k = 0; k < p1.size(); ++k) {
    if (k < inliers.size() && !inliers[k]) continue;
    x1.push_back(p1[k].vec());
    x2.push_back(p2[k].vec());
  }
  if (x1.size() < 5) return initial;
  RelativePoseProblem problem(initial, std::move(x1), std::move(x2));
  solve_dense(problem);
  RelativePose refined = problem.pose();
  refined.rotation = project_to_rotation(refined.rotation);
  return refined;
}

RelativeOrientation estimate_relative_orientation(std::span<const SpherePoint> p1,
                                                  std::span<const SpherePoint> p2,
                                                  const ImageDims& dims, const RansacParams& params) {
  EssentialRansacResult ransac = estimate_essential_ransac(p1, p2, dims, params);
  const Decomposition dec = decompose_essential(ransac.essential, p1, p2, ransac.inliers);
  RelativeOrientation out;
  out.pose = refine_relative_pose(dec.pose, p1, p2, ransac.inliers);
  out.essential = EssentialMatrix::from_motion(out.pose.rotation, out.pose.translation);
  out.inliers = std::move(ransac.inliers);
  out.num_inliers = ransac.num_inliers;
  return out;
}

}  // namespace sphsfm
