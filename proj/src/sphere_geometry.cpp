#include "sphsfm/sphere_geometry.hpp"

#include <cmath>
#include <string>

#include "sphsfm/error.hpp"

namespace sphsfm {

namespace {

constexpr double kPi = M_PI;
constexpr double kTwoPi = 2.0 * M_PI;

Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

}  // namespace

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ProjectionAtCenter: return "ProjectionAtCenter";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::CheiralityFailure: return "CheiralityFailure";
    case ErrorCode::NoParallax: return "NoParallax";
    case ErrorCode::BehindRay: return "BehindRay";
    case ErrorCode::InsufficientMatches: return "InsufficientMatches";
    case ErrorCode::NoSeed: return "NoSeed";
    case ErrorCode::SeedCollapse: return "SeedCollapse";
    case ErrorCode::NoCandidate: return "NoCandidate";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Format: return "Format";
  }
  return "Unknown";
}

void validate(const ImageDims& dims) {
  if (dims.width < 2 || dims.height < 1) {
    throw Error(ErrorCode::InvalidArgument, "image dims " + std::to_string(dims.width) + "x" +
                                                std::to_string(dims.height));
  }
}

SpherePoint SpherePoint::from_vector(const Eigen::Vector3d& v) {
  const double n = v.norm();
  if (!std::isfinite(n) || n <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "cannot normalize a zero or non-finite vector");
  }
  return SpherePoint(v / n);
}

SpherePoint SpherePoint::from_unit(const Eigen::Vector3d& v) {
  const double n = v.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6) {
    throw Error(ErrorCode::InvalidArgument, "vector is not unit length");
  }
  return SpherePoint(v / n);
}

Pose::Pose()
    : quaternion_(Eigen::Quaterniond::Identity()),
      rotation_(Eigen::Matrix3d::Identity()),
      translation_(Eigen::Vector3d::Zero()) {}

Pose::Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
  if ((rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-10 ||
      std::abs(rotation.determinant() - 1.0) > 1e-10) {
    throw Error(ErrorCode::InvalidArgument, "rotation is not a proper orthonormal matrix");
  }
  if (!translation.allFinite()) throw Error(ErrorCode::NonFinite, "translation");
  quaternion_ = canonical(Eigen::Quaterniond(rotation).normalized());
}

Pose Pose::from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& translation) {
  const double n = q.norm();
  if (!std::isfinite(n) || n < 1e-12) throw Error(ErrorCode::InvalidArgument, "zero quaternion");
  Pose pose;
  pose.quaternion_ = std::abs(n - 1.0) < 1e-12 ? canonical(q) : canonical(q.normalized());
  pose.rotation_ = pose.quaternion_.toRotationMatrix();
  pose.translation_ = translation;
  return pose;
}

Pose Pose::from_center(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& center) {
  return Pose(rotation, -rotation * center);
}

Intrinsics::Intrinsics(ImageDims d) : dims(d) { validate(dims); }

GeoCoord normalize_geo(GeoCoord g) {
  // Fold latitude into [-pi, pi), then reflect across the poles.
  double phi = std::fmod(g.phi + kPi, kTwoPi);
  if (phi < 0.0) phi += kTwoPi;
  phi -= kPi;
  double theta = g.theta;
  if (phi > kPi / 2) {
    phi = kPi - phi;
    theta += kPi;
  } else if (phi < -kPi / 2) {
    phi = -kPi - phi;
    theta += kPi;
  }
  theta = std::fmod(theta + kPi, kTwoPi);
  if (theta < 0.0) theta += kTwoPi;
  theta -= kPi;
  if (theta >= kPi) theta -= kTwoPi;
  if (std::abs(phi) == kPi / 2) theta = 0.0;
  return {theta, phi};
}

GeoCoord pixel_to_geo(const PixelCoord& pix, const Intrinsics& intr) {
  if (!std::isfinite(pix.ix) || !std::isfinite(pix.iy)) {
    throw Error(ErrorCode::NonFinite, "pixel coordinate");
  }
  const double w = intr.dims.width;
  const double h = intr.dims.height;
  const double theta = (pix.ix - intr.cx()) * kTwoPi / w;
  const double phi = (intr.cy() - pix.iy) * kPi / h;
  if (theta >= -kPi && theta < kPi && phi >= -kPi / 2 && phi <= kPi / 2) {
    return {std::abs(phi) == kPi / 2 ? 0.0 : theta, phi};
  }
  return normalize_geo({theta, phi});
}

SpherePoint geo_to_sphere(const GeoCoord& g) {
  const double cp = std::cos(g.phi);
  return SpherePoint::from_vector(
      Eigen::Vector3d(cp * std::sin(g.theta), -std::sin(g.phi), cp * std::cos(g.theta)));
}

GeoCoord sphere_to_geo(const Eigen::Vector3d& p) {
  const double n = p.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6) {
    throw Error(ErrorCode::InvalidArgument, "sphere point is not unit length");
  }
  const double horizontal = std::hypot(p.x(), p.z());
  const double phi = std::atan2(-p.y(), horizontal);
  if (horizontal == 0.0) return {0.0, phi};
  double theta = std::atan2(p.x(), p.z());
  if (theta >= kPi) theta -= kTwoPi;
  return {theta, phi};
}

PixelCoord geo_to_pixel(const GeoCoord& g, const Intrinsics& intr) {
  return {intr.cx() + g.theta * intr.dims.width / kTwoPi,
          intr.cy() - g.phi * intr.dims.height / kPi};
}

SpherePoint world_to_sphere(const Eigen::Vector3d& world, const Pose& pose) {
  const Eigen::Vector3d p = pose.transform(world);
  const double n = p.norm();
  if (!(n > kDepthEpsilon)) {
    throw Error(ErrorCode::ProjectionAtCenter, "point coincides with the camera center");
  }
  return SpherePoint::from_vector(p);
}

PixelCoord project_to_pixel(const Eigen::Vector3d& world, const Pose& pose, const Intrinsics& intr) {
  return geo_to_pixel(sphere_to_geo(world_to_sphere(world, pose)), intr);
}

PixelCoord wrap_pixel(const PixelCoord& pix, const ImageDims& dims) {
  const double w = dims.width;
  double ix = std::fmod(pix.ix, w);
  if (ix < 0.0) ix += w;
  if (ix >= w) ix -= w;
  const double iy = std::clamp(pix.iy, 0.0, static_cast<double>(dims.height));
  return {ix, iy};
}

}  // namespace sphsfm
