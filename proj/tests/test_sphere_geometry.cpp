#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sphsfm/error.hpp"
#include "sphsfm/rotation.hpp"
#include "sphsfm/sphere_geometry.hpp"
#include "sphsfm/synthetic.hpp"
#include "test_support.hpp"

using namespace sphsfm;

namespace {

const Intrinsics kIntr(ImageDims{4000, 2000});

void expect_vec(const Eigen::Vector3d& got, const Eigen::Vector3d& want, double tol) {
  EXPECT_LT((got - want).norm(), tol) << got.transpose() << " vs " << want.transpose();
}

}  // namespace

TEST(SphereGeometry, ImageCenterLooksDownTheOpticalAxis) {
  expect_vec(pixel_to_sphere({2000, 1000}, kIntr).vec(), {0, 0, 1}, 1e-15);
}

TEST(SphereGeometry, QuarterWidthOffsetsPointSideways) {
  expect_vec(pixel_to_sphere({3000, 1000}, kIntr).vec(), {1, 0, 0}, 1e-15);
  expect_vec(pixel_to_sphere({1000, 1000}, kIntr).vec(), {-1, 0, 0}, 1e-15);
}

TEST(SphereGeometry, TopRowIsTheUpPoleWithNegativeY) {
  expect_vec(pixel_to_sphere({2000, 0}, kIntr).vec(), {0, -1, 0}, 1e-15);
  expect_vec(pixel_to_sphere({123, 2000}, kIntr).vec(), {0, 1, 0}, 1e-15);
}

TEST(SphereGeometry, LeftEdgeIsTheBackDirection) {
  expect_vec(pixel_to_sphere({0, 1000}, kIntr).vec(), {0, 0, -1}, 1e-15);
}

TEST(SphereGeometry, LongitudeOfPiWrapsToColumnZero) {
  const PixelCoord px = geo_to_pixel(normalize_geo({M_PI, 0.0}), kIntr);
  EXPECT_NEAR(px.ix, 0.0, 1e-12);
  EXPECT_NEAR(px.iy, 1000.0, 1e-12);
}

TEST(SphereGeometry, PolesGetZeroLongitude) {
  EXPECT_EQ(sphere_to_geo(Eigen::Vector3d(0, -1, 0)).theta, 0.0);
  EXPECT_NEAR(sphere_to_geo(Eigen::Vector3d(0, -1, 0)).phi, M_PI / 2, 1e-15);
  EXPECT_EQ(sphere_to_geo(Eigen::Vector3d(0, 1, 0)).theta, 0.0);
}

TEST(SphereGeometry, SphereToGeoRejectsNonUnitInput) {
  EXPECT_THROW(sphere_to_geo(Eigen::Vector3d(0, 0, 2)), Error);
}

TEST(SphereGeometry, NonFinitePixelIsRejected) {
  try {
    pixel_to_geo({std::nan(""), 3.0}, kIntr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
  }
}

TEST(SphereGeometry, PointAtCameraCenterCannotBeProjected) {
  const Pose pose = Pose::from_center(Eigen::Matrix3d::Identity(), {1, 2, 3});
  try {
    world_to_sphere({1, 2, 3}, pose);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProjectionAtCenter);
  }
}

TEST(SphereGeometry, InvalidDimsAreRejected) {
  EXPECT_THROW(validate(ImageDims{1, 1}), Error);
  EXPECT_THROW(validate(ImageDims{4, 0}), Error);
  EXPECT_NO_THROW(validate(ImageDims{2, 1}));
}

TEST(SphereGeometry, WrapPixelIsPeriodicHorizontallyAndClampsVertically) {
  const PixelCoord a = wrap_pixel({-1.0, -5.0}, {100, 50});
  EXPECT_DOUBLE_EQ(a.ix, 99.0);
  EXPECT_DOUBLE_EQ(a.iy, 0.0);
  const PixelCoord b = wrap_pixel({250.5, 60.0}, {100, 50});
  EXPECT_DOUBLE_EQ(b.ix, 50.5);
  EXPECT_DOUBLE_EQ(b.iy, 50.0);
}

TEST(SphereGeometry, RandomPixelsRoundTrip) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(0.0, 4000.0), uy(1e-3, 2000.0 - 1e-3);
  for (int k = 0; k < 10000; ++k) {
    const PixelCoord px{ux(rng), uy(rng)};
    const PixelCoord back = sphere_to_pixel(pixel_to_sphere(px, kIntr), kIntr);
    ASSERT_NEAR(back.ix, px.ix, 1e-9);
    ASSERT_NEAR(back.iy, px.iy, 1e-9);
  }
}

TEST(SphereGeometry, RandomDirectionsRoundTrip) {
  std::mt19937_64 rng(12);
  for (int k = 0; k < 10000; ++k) {
    const Eigen::Vector3d v = random_unit_vector(rng);
    const Eigen::Vector3d back = geo_to_sphere(sphere_to_geo(v)).vec();
    ASSERT_LT((back - v).norm(), 1e-12);
  }
}

TEST(SphereGeometry, ProjectionAgreesWithIndependentOracle) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int k = 0; k < 2000; ++k) {
    const Pose pose = Pose::from_center(random_rotation(rng), {u(rng), u(rng), u(rng)});
    const Eigen::Vector3d x(u(rng), u(rng), u(rng));
    const PixelCoord a = project_to_pixel(x, pose, kIntr);
    const PixelCoord b = oracle_project(pose, x, kIntr.dims);
    double dx = std::abs(a.ix - b.ix);
    dx = std::min(dx, 4000.0 - dx);
    ASSERT_LT(dx, 1e-9);
    ASSERT_LT(std::abs(a.iy - b.iy), 1e-9);
  }
}

TEST(Pose, CenterAndQuaternionAreConsistent) {
  std::mt19937_64 rng(14);
  const Eigen::Matrix3d r = random_rotation(rng);
  const Pose pose = Pose::from_center(r, {1, -2, 3});
  EXPECT_LT((pose.center() - Eigen::Vector3d(1, -2, 3)).norm(), 1e-12);
  EXPECT_GE(pose.quaternion().w(), 0.0);
  EXPECT_LT((pose.quaternion().toRotationMatrix() - r).norm(), 1e-12);
}

TEST(Pose, NonRotationMatrixIsRejected) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = 1.1;
  EXPECT_THROW(Pose(m, Eigen::Vector3d::Zero()), Error);
  EXPECT_THROW(Pose(-Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero()), Error);
}

TEST(Rotation, ExpAndLogAreInverse) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.0, M_PI - 1e-6);
  for (int k = 0; k < 500; ++k) {
    const Eigen::Vector3d w = u(rng) * random_unit_vector(rng);
    ASSERT_LT((log_so3(exp_so3(w)) - w).norm(), 1e-8);
  }
  EXPECT_LT((exp_so3(Eigen::Vector3d(0, 0, M_PI / 2)) - Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix()).norm(), 1e-15);
}

TEST(Rotation, AngleBetweenRotations) {
  const Eigen::Matrix3d a = Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitX()).toRotationMatrix();
  EXPECT_NEAR(rotation_angle_between(Eigen::Matrix3d::Identity(), a), 0.3, 1e-14);
}
