#pragma once

// Perspective cube faces re-rendered from oriented ERP panoramas.

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "sphsfm/image.hpp"
#include "sphsfm/sfm_engine.hpp"
#include "sphsfm/sphere_geometry.hpp"

namespace sphsfm {

/// Declaration order is the tie-break order for directions on a face boundary.
enum class Face { Front, Back, Left, Right, Up, Down };

inline constexpr std::array<Face, 6> kAllFaces = {Face::Front, Face::Back, Face::Left,
                                                  Face::Right, Face::Up,   Face::Down};

const char* to_string(Face face);

struct CubeFaceSpec {
  Face face = Face::Front;
  int size = 1024;
  Eigen::Matrix3d Kp = Eigen::Matrix3d::Identity();
  /// Rows are the face's x, y, z axes written in the sphere frame, so
  /// R_pS * u takes a sphere-frame direction into the face frame.
  Eigen::Matrix3d R_pS = Eigen::Matrix3d::Identity();

  static CubeFaceSpec make(Face face, int size = 1024);
};

struct CubeFaceImage {
  CubeFaceSpec spec;
  RgbImage raster;
  Pose pose;  // world -> face
};

/// The face whose axis is closest to `dir`.
Face face_for_direction(const Eigen::Vector3d& dir);

SpherePoint face_pixel_to_sphere_dir(const PixelCoord& x, const CubeFaceSpec& spec);
/// Empty when the direction points away from the face.
std::optional<PixelCoord> sphere_dir_to_face_pixel(const Eigen::Vector3d& dir, const CubeFaceSpec& spec);

/// Bilinear ERP lookup with horizontal wrap and vertical clamp.
std::array<double, 3> sample_bilinear(const RgbImage& erp, const PixelCoord& pix);

RgbImage render_face(const RgbImage& erp, const CubeFaceSpec& spec);

/// R_p = R_pS * R, T_p = -R_p * (-R^T * T); the projection center is shared.
Pose update_pose(const Pose& pose, const CubeFaceSpec& spec);

std::optional<PixelCoord> project_to_face(const Eigen::Vector3d& world, const Pose& face_pose,
                                          const CubeFaceSpec& spec);

struct CubemapExportOptions {
  int face_size = 1024;
  int threads = 1;
  bool write_points = true;
};

/// Returns the raster of image i (indexed like recon.images).
using ImageSource = std::function<RgbImage(int)>;

/// Writes `<stem>_<face>.png`, `<stem>_<face>.txt` per registered image and face,
/// `manifest.txt`, and `points.ply` with the sparse points. Returns the number of faces.
int export_for_mvs(const Reconstruction& recon, const ImageSource& source, const std::filesystem::path& out_dir,
                   const CubemapExportOptions& options = {});

}  // namespace sphsfm
