#pragma once

// Ground-truth scenes with planted features, and comparison of a reconstruction
// against the truth after similarity alignment.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "sphsfm/feature_match.hpp"
#include "sphsfm/sfm_engine.hpp"
#include "sphsfm/sphere_geometry.hpp"

namespace sphsfm {

enum class LayoutKind { Ring, Corridor, TwoFloors };

const char* to_string(LayoutKind kind);
std::optional<LayoutKind> parse_layout(std::string_view name);

struct Layout {
  LayoutKind kind = LayoutKind::Ring;
  int cameras = 2;
  /// Ring radius or corridor spacing; unused by two_floors.
  double size = 10.0;

  static Layout ring(int n, double radius) { return {LayoutKind::Ring, n, radius}; }
  static Layout corridor(int n, double step) { return {LayoutKind::Corridor, n, step}; }
  static Layout two_floors(int n) { return {LayoutKind::TwoFloors, n, 6.0}; }
};

struct SyntheticScene {
  Layout layout;
  std::vector<std::string> names;
  std::vector<Pose> poses;
  std::vector<Eigen::Vector3d> points;
  std::vector<Color> colors;
  ImageDims dims{4000, 2000};
  double noise_px = 0.0;
  double outlier_rate = 0.0;
  std::uint64_t rng_seed = 0;
  /// Points farther than this from a camera are not observed by it; 0 means unlimited.
  double visibility_range = 0.0;

  bool visible(int camera, int point) const;
};

/// Throws InvalidArgument for n < 2, n_points < 8, bad dims or nonpositive size.
SyntheticScene generate(const Layout& layout, int n_points, ImageDims dims, std::uint64_t seed);

struct SyntheticDataset {
  std::vector<ImageEntry> images;
  std::vector<std::vector<int>> feature_point;    // [image][feature] -> point index
  std::vector<std::vector<bool>> feature_inlier;  // false when the pixel was replaced at random
};

/// Projects every visible point, adds noise and outliers, plants one shared
/// descriptor per point and shuffles the feature order of each image.
SyntheticDataset observe(const SyntheticScene& scene);

/// Every image pair sharing a point, matched and labeled from the truth.
MatchGraph truth_graph(const SyntheticDataset& data);

/// Camera model written out directly from the ERP equations, without going
/// through sphere_geometry; used to cross-check that module.
PixelCoord oracle_project(const Pose& pose, const Eigen::Vector3d& world, const ImageDims& dims);

Eigen::Matrix3d random_rotation(std::mt19937_64& rng);
Eigen::Vector3d random_unit_vector(std::mt19937_64& rng);

struct CameraError {
  std::string name;
  double rotation_deg = 0.0;
  double center = 0.0;  // fraction of the true camera-center diameter
};

struct AlignmentReport {
  int registered = 0;
  int total = 0;
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();  // truth ~ scale * rotation * estimate + translation
  double diameter = 0.0;
  std::vector<CameraError> cameras;  // registered cameras only, in truth order
  double max_rotation_deg = 0.0;
  double max_center = 0.0;
  int matched_points = 0;
  double point_rms = 0.0;  // scene units
};

/// Umeyama similarity on the camera centers (points are added when the centers
/// are collinear). Throws InvalidArgument with fewer than 3 common cameras.
AlignmentReport compare_reconstruction(const Reconstruction& recon, const SyntheticScene& scene,
                                       const SyntheticDataset& data);

/// Reconstruction-format dump of the truth plus a TRUTH section.
void write_truth(const std::filesystem::path& path, const SyntheticScene& scene, const SyntheticDataset& data);
/// Features come back with pixels only (no descriptors).
std::pair<SyntheticScene, SyntheticDataset> read_truth(const std::filesystem::path& path);

}  // namespace sphsfm
