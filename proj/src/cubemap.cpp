#include "sphsfm/cubemap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "sphsfm/error.hpp"
#include "sphsfm/io.hpp"
#include "sphsfm/parallel.hpp"

namespace sphsfm {

const char* to_string(Face face) {
  switch (face) {
    case Face::Front: return "front";
    case Face::Back: return "back";
    case Face::Left: return "left";
    case Face::Right: return "right";
    case Face::Up: return "up";
    case Face::Down: return "down";
  }
  return "?";
}

CubeFaceSpec CubeFaceSpec::make(Face face, int size) {
  if (size < 1) throw Error(ErrorCode::InvalidArgument, "face size must be positive");
  CubeFaceSpec spec;
  spec.face = face;
  spec.size = size;
  const double h = size / 2.0;
  spec.Kp << h, 0, h, 0, h, h, 0, 0, 1;
  Eigen::Vector3d x, y, z;
  switch (face) {
    case Face::Front: x = {1, 0, 0}; y = {0, 1, 0}; z = {0, 0, 1}; break;
    case Face::Back: x = {-1, 0, 0}; y = {0, 1, 0}; z = {0, 0, -1}; break;
    case Face::Left: x = {0, 0, 1}; y = {0, 1, 0}; z = {-1, 0, 0}; break;
    case Face::Right: x = {0, 0, -1}; y = {0, 1, 0}; z = {1, 0, 0}; break;
    case Face::Up: x = {1, 0, 0}; y = {0, 0, 1}; z = {0, -1, 0}; break;
    case Face::Down: x = {1, 0, 0}; y = {0, 0, -1}; z = {0, 1, 0}; break;
  }
  spec.R_pS.row(0) = x.transpose();
  spec.R_pS.row(1) = y.transpose();
  spec.R_pS.row(2) = z.transpose();
  return spec;
}

Face face_for_direction(const Eigen::Vector3d& dir) {
  Face best = Face::Front;
  double best_dot = -std::numeric_limits<double>::infinity();
  for (Face f : kAllFaces) {
    const double d = CubeFaceSpec::make(f, 1).R_pS.row(2).dot(dir);
    if (d > best_dot) {
      best_dot = d;
      best = f;
    }
  }
  return best;
}

SpherePoint face_pixel_to_sphere_dir(const PixelCoord& x, const CubeFaceSpec& spec) {
  const Eigen::Vector3d u = spec.Kp.inverse() * Eigen::Vector3d(x.ix, x.iy, 1.0);
  return SpherePoint::from_vector(spec.R_pS.transpose() * u.normalized());
}

std::optional<PixelCoord> sphere_dir_to_face_pixel(const Eigen::Vector3d& dir, const CubeFaceSpec& spec) {
  const Eigen::Vector3d u = spec.R_pS * dir;
  if (!(u.z() > kDepthEpsilon)) return std::nullopt;
  const Eigen::Vector3d x = spec.Kp * (u / u.z());
  return PixelCoord{x.x(), x.y()};
}

std::array<double, 3> sample_bilinear(const RgbImage& erp, const PixelCoord& pix) {
  const double sx = pix.ix - 0.5;
  const double sy = std::clamp(pix.iy - 0.5, 0.0, static_cast<double>(erp.height - 1));
  const double fx = std::floor(sx);
  const double fy = std::floor(sy);
  const double ax = sx - fx;
  const double ay = sy - fy;
  const int w = erp.width;
  const int x0 = ((static_cast<int>(fx) % w) + w) % w;
  const int x1 = (x0 + 1) % w;
  const int y0 = static_cast<int>(fy);
  const int y1 = std::min(y0 + 1, erp.height - 1);
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double top = (1 - ax) * erp.at(x0, y0)[c] + ax * erp.at(x1, y0)[c];
    const double bottom = (1 - ax) * erp.at(x0, y1)[c] + ax * erp.at(x1, y1)[c];
    out[c] = (1 - ay) * top + ay * bottom;
  }
  return out;
}

RgbImage render_face(const RgbImage& erp, const CubeFaceSpec& spec) {
  if (erp.empty()) throw Error(ErrorCode::InvalidArgument, "empty ERP raster");
  const Intrinsics intr(erp.dims());
  RgbImage face(spec.size, spec.size);
  for (int j = 0; j < spec.size; ++j) {
    for (int i = 0; i < spec.size; ++i) {
      const SpherePoint d = face_pixel_to_sphere_dir({i + 0.5, j + 0.5}, spec);
      const auto rgb = sample_bilinear(erp, sphere_to_pixel(d, intr));
      std::uint8_t* px = face.at(i, j);
      for (int c = 0; c < 3; ++c) px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(rgb[c]), 0L, 255L));
    }
  }
  return face;
}

Pose update_pose(const Pose& pose, const CubeFaceSpec& spec) {
  const Eigen::Matrix3d rp = spec.R_pS * pose.rotation();
  const Eigen::Vector3d center = -pose.rotation().transpose() * pose.translation();
  return Pose(rp, -rp * center);
}

std::optional<PixelCoord> project_to_face(const Eigen::Vector3d& world, const Pose& face_pose,
                                          const CubeFaceSpec& spec) {
  const Eigen::Vector3d p = face_pose.transform(world);
  if (!(p.z() > kDepthEpsilon)) return std::nullopt;
  const Eigen::Vector3d x = spec.Kp * (p / p.z());
  return PixelCoord{x.x(), x.y()};
}

int export_for_mvs(const Reconstruction& recon, const ImageSource& source, const std::filesystem::path& out_dir,
                   const CubemapExportOptions& options) {
  if (recon.poses.empty()) throw Error(ErrorCode::InvalidArgument, "reconstruction has no registered images");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw Error(ErrorCode::Io, "cannot create output directory " + out_dir.string());
  }

  std::vector<int> registered;
  for (const auto& [img, pose] : recon.poses) registered.push_back(img);

  struct Job {
    int image;
    Face face;
  };
  std::vector<Job> jobs;
  for (int img : registered) {
    for (Face f : kAllFaces) jobs.push_back({img, f});
  }
  auto stem = [&](int img) { return std::filesystem::path(recon.images[img].name).stem().string(); };

  // Each image is decoded once; its six faces are rendered in parallel afterwards.
  std::vector<RgbImage> rasters(recon.images.size());
  parallel_for(static_cast<int>(registered.size()), options.threads,
               [&](int k) { rasters[registered[k]] = source(registered[k]); });

  parallel_for(static_cast<int>(jobs.size()), options.threads, [&](int k) {
    const Job& job = jobs[k];
    const CubeFaceSpec spec = CubeFaceSpec::make(job.face, options.face_size);
    const std::string base = stem(job.image) + "_" + to_string(job.face);
    write_png(out_dir / (base + ".png"), render_face(rasters[job.image], spec));
    const Pose pose = update_pose(recon.poses.at(job.image), spec);
    std::ofstream cam(out_dir / (base + ".txt"), std::ios::binary);
    if (!cam) throw Error(ErrorCode::Io, "cannot write camera file for " + base);
    cam << "PINHOLE " << spec.size << ' ' << spec.size << ' ' << format_double(spec.Kp(0, 0)) << ' '
        << format_double(spec.Kp(1, 1)) << ' ' << format_double(spec.Kp(0, 2)) << ' '
        << format_double(spec.Kp(1, 2)) << '\n';
    const Eigen::Quaterniond& q = pose.quaternion();
    cam << "POSE " << format_double(q.w()) << ' ' << format_double(q.x()) << ' ' << format_double(q.y()) << ' '
        << format_double(q.z()) << ' ' << format_double(pose.translation().x()) << ' '
        << format_double(pose.translation().y()) << ' ' << format_double(pose.translation().z()) << '\n';
  });

  std::ofstream manifest(out_dir / "manifest.txt", std::ios::binary);
  if (!manifest) throw Error(ErrorCode::Io, "cannot write manifest");
  for (const Job& job : jobs) {
    const std::string base = stem(job.image) + "_" + to_string(job.face);
    manifest << recon.images[job.image].name << ' ' << to_string(job.face) << ' ' << base << ".txt " << base
             << ".png\n";
  }
  if (options.write_points && !recon.points.empty()) write_ply(out_dir / "points.ply", recon, true);
  return static_cast<int>(jobs.size());
}

}  // namespace sphsfm
