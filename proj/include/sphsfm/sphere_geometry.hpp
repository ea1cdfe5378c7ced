#pragma once

// Unit-sphere camera model for equirectangular (ERP) panoramas.
//
// Conventions: pixel (0, 0) is the top-left corner of the top-left pixel,
// columns grow rightward and rows downward. Longitude theta is measured from
// the camera +Z axis toward +X, latitude phi is positive upward, and the
// camera +Y axis points down (y = -sin(phi)).

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sphsfm {

inline constexpr double kDepthEpsilon = 1e-12;

struct ImageDims {
  int width = 0;
  int height = 0;

  /// True when width == 2 * height; other aspect ratios are usable but unusual.
  bool is_standard_erp() const { return width == 2 * height; }
  int max_side() const { return width > height ? width : height; }
  bool operator==(const ImageDims&) const = default;
};

/// Throws InvalidArgument unless width >= 2 and height >= 1.
void validate(const ImageDims& dims);

struct PixelCoord {
  double ix = 0.0;
  double iy = 0.0;
};

struct GeoCoord {
  double theta = 0.0;  // longitude, [-pi, pi)
  double phi = 0.0;    // latitude, [-pi/2, pi/2]
};

/// Unit direction on the camera sphere.
class SpherePoint {
 public:
  SpherePoint() : v_(0.0, 0.0, 1.0) {}

  /// Normalizes any nonzero finite vector.
  static SpherePoint from_vector(const Eigen::Vector3d& v);
  /// Accepts a vector that is already unit length within 1e-6 and renormalizes it.
  static SpherePoint from_unit(const Eigen::Vector3d& v);

  const Eigen::Vector3d& vec() const { return v_; }
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }

 private:
  explicit SpherePoint(const Eigen::Vector3d& v) : v_(v) {}
  Eigen::Vector3d v_;
};

/// World-to-camera rigid transform: P = R * Pw + T.
///
/// The unit quaternion the pose was built from is kept alongside the matrix so
/// text serialization round-trips bit for bit.
class Pose {
 public:
  Pose();
  /// `rotation` must be orthonormal with det +1 within 1e-10.
  Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Eigen::Vector3d& translation);
  /// Pose whose camera center is `center`: T = -R * center.
  static Pose from_center(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& center);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  /// Canonical form with w >= 0.
  const Eigen::Quaterniond& quaternion() const { return quaternion_; }
  Eigen::Vector3d center() const { return -rotation_.transpose() * translation_; }
  Eigen::Vector3d transform(const Eigen::Vector3d& world) const {
    return rotation_ * world + translation_;
  }

 private:
  Eigen::Quaterniond quaternion_;
  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

/// Spherical camera intrinsics: focal length fixed at 1, principal point at the image center.
struct Intrinsics {
  ImageDims dims;

  explicit Intrinsics(ImageDims d = {2, 1});
  double f() const { return 1.0; }
  double cx() const { return dims.width / 2.0; }
  double cy() const { return dims.height / 2.0; }
};

/// Reduces theta into [-pi, pi) and reflects latitudes past a pole.
GeoCoord normalize_geo(GeoCoord g);

GeoCoord pixel_to_geo(const PixelCoord& pix, const Intrinsics& intr);
SpherePoint geo_to_sphere(const GeoCoord& g);
/// Throws if |p| deviates from 1 by more than 1e-6. Poles get theta = 0.
GeoCoord sphere_to_geo(const Eigen::Vector3d& p);
inline GeoCoord sphere_to_geo(const SpherePoint& p) { return sphere_to_geo(p.vec()); }
PixelCoord geo_to_pixel(const GeoCoord& g, const Intrinsics& intr);

/// Throws ProjectionAtCenter when the point sits on the camera center.
SpherePoint world_to_sphere(const Eigen::Vector3d& world, const Pose& pose);
PixelCoord project_to_pixel(const Eigen::Vector3d& world, const Pose& pose, const Intrinsics& intr);

inline SpherePoint pixel_to_sphere(const PixelCoord& pix, const Intrinsics& intr) {
  return geo_to_sphere(pixel_to_geo(pix, intr));
}
inline PixelCoord sphere_to_pixel(const SpherePoint& p, const Intrinsics& intr) {
  return geo_to_pixel(sphere_to_geo(p), intr);
}

/// Wraps ix periodically into [0, W) and clamps iy into [0, H].
PixelCoord wrap_pixel(const PixelCoord& pix, const ImageDims& dims);

}  // namespace sphsfm
