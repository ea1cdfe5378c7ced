#include "sphsfm/synthetic.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "sphsfm/error.hpp"
#include "sphsfm/io.hpp"
#include "sphsfm/rotation.hpp"

namespace sphsfm {

const char* to_string(LayoutKind kind) {
  switch (kind) {
    case LayoutKind::Ring: return "ring";
    case LayoutKind::Corridor: return "corridor";
    case LayoutKind::TwoFloors: return "two_floors";
  }
  return "?";
}

std::optional<LayoutKind> parse_layout(std::string_view name) {
  if (name == "ring") return LayoutKind::Ring;
  if (name == "corridor") return LayoutKind::Corridor;
  if (name == "two_floors") return LayoutKind::TwoFloors;
  return std::nullopt;
}

bool SyntheticScene::visible(int camera, int point) const {
  if (visibility_range <= 0.0) return true;
  return (points[point] - poses[camera].center()).norm() <= visibility_range;
}

Eigen::Vector3d random_unit_vector(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = {n(rng), n(rng), n(rng)};
  } while (v.norm() < 1e-6);
  return v.normalized();
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

namespace {

// Camera looking along `forward` with its y axis pointing along world +Y (down).
Pose heading_pose(const Eigen::Vector3d& center, const Eigen::Vector3d& forward) {
  const Eigen::Vector3d z = forward.normalized();
  const Eigen::Vector3d y = (Eigen::Vector3d::UnitY() - Eigen::Vector3d::UnitY().dot(z) * z).normalized();
  const Eigen::Vector3d x = y.cross(z);
  Eigen::Matrix3d r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return Pose::from_center(project_to_rotation(r), center);
}

}  // namespace

SyntheticScene generate(const Layout& layout, int n_points, ImageDims dims, std::uint64_t seed) {
  if (layout.cameras < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 cameras");
  if (n_points < 8) throw Error(ErrorCode::InvalidArgument, "need at least 8 points");
  if (!(layout.size > 0.0)) throw Error(ErrorCode::InvalidArgument, "layout size must be positive");
  validate(dims);

  SyntheticScene scene;
  scene.layout = layout;
  scene.dims = dims;
  scene.rng_seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  const int n = layout.cameras;
  Eigen::Vector3d lo, hi;
  double min_clearance = 0.0;
  switch (layout.kind) {
    case LayoutKind::Ring: {
      const double r = layout.size;
      for (int i = 0; i < n; ++i) {
        const double a = 2.0 * M_PI * i / n;
        const Eigen::Vector3d c(r * std::cos(a), 0.0, r * std::sin(a));
        scene.poses.push_back(heading_pose(c, {-std::sin(a), 0.0, std::cos(a)}));
      }
      lo = {-2 * r, -0.5 * r, -2 * r};
      hi = {2 * r, 0.5 * r, 2 * r};
      min_clearance = 0.1 * r;
      break;
    }
    case LayoutKind::Corridor: {
      const double s = layout.size;
      for (int i = 0; i < n; ++i) scene.poses.push_back(Pose::from_center(Eigen::Matrix3d::Identity(), {0, 0, i * s}));
      scene.visibility_range = std::max(25.0, 6.0 * s);
      break;
    }
    case LayoutKind::TwoFloors: {
      const double r = layout.size;
      const int lower = (n + 1) / 2;
      for (int i = 0; i < n; ++i) {
        const bool upper = i >= lower;
        const int k = upper ? i - lower : i;
        const int count = upper ? n - lower : lower;
        const double a = 2.0 * M_PI * (k + (upper ? 0.5 : 0.0)) / count;
        const Eigen::Vector3d c(r * std::cos(a), upper ? -3.5 : 0.0, r * std::sin(a));
        scene.poses.push_back(heading_pose(c, {-std::sin(a), 0.0, std::cos(a)}));
      }
      lo = {-2 * r, -6.0, -2 * r};
      hi = {2 * r, 2.0, 2 * r};
      min_clearance = 0.1 * r;
      break;
    }
  }

  std::uniform_int_distribution<int> byte(0, 255);
  while (static_cast<int>(scene.points.size()) < n_points) {
    Eigen::Vector3d p;
    if (layout.kind == LayoutKind::Corridor) {
      // Facades on both sides of the road plus the road surface.
      const double zmin = -15.0;
      const double zmax = (n - 1) * layout.size + 15.0;
      const double pick = u01(rng);
      if (pick < 0.45) p = {-5.0, uniform(-8.0, 1.6), uniform(zmin, zmax)};
      else if (pick < 0.9) p = {5.0, uniform(-8.0, 1.6), uniform(zmin, zmax)};
      else p = {uniform(-5.0, 5.0), 1.6, uniform(zmin, zmax)};
    } else {
      p = {uniform(lo.x(), hi.x()), uniform(lo.y(), hi.y()), uniform(lo.z(), hi.z())};
    }
    bool ok = true;
    int seen = 0;
    for (const Pose& pose : scene.poses) {
      const double d = (p - pose.center()).norm();
      ok = ok && d > std::max(min_clearance, 1e-3);
      if (scene.visibility_range <= 0.0 || d <= scene.visibility_range) ++seen;
    }
    if (!ok || seen < 2) continue;
    scene.points.push_back(p);
    scene.colors.push_back({static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
                            static_cast<std::uint8_t>(byte(rng))});
  }
  for (int i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "cam_%03d.png", i);
    scene.names.push_back(name);
  }
  return scene;
}

PixelCoord oracle_project(const Pose& pose, const Eigen::Vector3d& world, const ImageDims& dims) {
  const Eigen::Vector3d p = pose.rotation() * world + pose.translation();
  const double r = p.norm();
  const double x = p.x() / r, y = p.y() / r, z = p.z() / r;
  const double lon = std::atan2(x, z);
  const double lat = std::asin(std::clamp(-y, -1.0, 1.0));
  double ix = dims.width / 2.0 + lon * dims.width / (2.0 * M_PI);
  const double iy = dims.height / 2.0 - lat * dims.height / M_PI;
  if (ix >= dims.width) ix -= dims.width;
  return {ix, iy};
}

SyntheticDataset observe(const SyntheticScene& scene) {
  if (scene.noise_px < 0.0 || scene.outlier_rate < 0.0 || scene.outlier_rate >= 1.0) {
    throw Error(ErrorCode::InvalidArgument, "noise must be >= 0 and outlier rate in [0, 1)");
  }
  std::mt19937_64 rng(scene.rng_seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  const int np = static_cast<int>(scene.points.size());
  std::vector<Eigen::VectorXd> descriptors(np);
  for (auto& d : descriptors) {
    d.resize(kDefaultDescriptorDim);
    for (int k = 0; k < d.size(); ++k) d[k] = gauss(rng);
    d.normalize();
  }

  SyntheticDataset data;
  const Intrinsics intr(scene.dims);
  for (size_t cam = 0; cam < scene.poses.size(); ++cam) {
    ImageEntry img;
    img.name = scene.names[cam];
    img.intrinsics = intr;
    img.position = scene.poses[cam].center();
    std::vector<int> order;
    for (int p = 0; p < np; ++p) {
      if (scene.visible(static_cast<int>(cam), p)) order.push_back(p);
    }
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> fpoint;
    std::vector<bool> finlier;
    for (int p : order) {
      Feature f;
      const bool outlier = u01(rng) < scene.outlier_rate;
      if (outlier) {
        f.pix = {u01(rng) * scene.dims.width, u01(rng) * scene.dims.height};
      } else {
        const PixelCoord x = oracle_project(scene.poses[cam], scene.points[p], scene.dims);
        f.pix = {x.ix, x.iy};
        if (scene.noise_px > 0.0) {
          f.pix.ix += scene.noise_px * gauss(rng);
          f.pix.iy += scene.noise_px * gauss(rng);
          f.pix = wrap_pixel(f.pix, scene.dims);
        }
      }
      f.scale = 2.0;
      f.descriptor = descriptors[p];
      img.features.push_back(std::move(f));
      img.colors.push_back(scene.colors[p]);
      fpoint.push_back(p);
      finlier.push_back(!outlier);
    }
    data.images.push_back(std::move(img));
    data.feature_point.push_back(std::move(fpoint));
    data.feature_inlier.push_back(std::move(finlier));
  }
  return data;
}

MatchGraph truth_graph(const SyntheticDataset& data) {
  MatchGraph graph;
  graph.images = data.images;
  const int n = static_cast<int>(data.images.size());
  std::vector<std::map<int, int>> point_feature(n);
  for (int i = 0; i < n; ++i) {
    for (size_t f = 0; f < data.feature_point[i].size(); ++f) point_feature[i][data.feature_point[i][f]] = static_cast<int>(f);
  }
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      MatchPair pair;
      pair.image_a = a;
      pair.image_b = b;
      for (const auto& [p, fa] : point_feature[a]) {
        auto it = point_feature[b].find(p);
        if (it == point_feature[b].end()) continue;
        pair.matches.emplace_back(fa, it->second);
      }
      if (pair.matches.empty()) continue;
      std::sort(pair.matches.begin(), pair.matches.end());
      for (const auto& [fa, fb] : pair.matches) {
        pair.inlier_mask.push_back(data.feature_inlier[a][fa] && data.feature_inlier[b][fb]);
      }
      pair.verified = true;
      graph.pairs.push_back(std::move(pair));
    }
  }
  graph.tracks = build_tracks(graph);
  return graph;
}

AlignmentReport compare_reconstruction(const Reconstruction& recon, const SyntheticScene& scene,
                                       const SyntheticDataset& data) {
  std::map<std::string, int> truth_index;
  for (size_t i = 0; i < scene.names.size(); ++i) truth_index[scene.names[i]] = static_cast<int>(i);

  AlignmentReport rep;
  rep.total = static_cast<int>(scene.poses.size());
  std::vector<int> recon_to_truth(recon.images.size(), -1);
  for (size_t i = 0; i < recon.images.size(); ++i) {
    if (auto it = truth_index.find(recon.images[i].name); it != truth_index.end()) recon_to_truth[i] = it->second;
  }
  std::vector<std::pair<int, int>> common;  // (recon image, truth camera) ordered by truth index
  for (const auto& [img, pose] : recon.poses) {
    if (recon_to_truth[img] >= 0) common.emplace_back(img, recon_to_truth[img]);
  }
  std::sort(common.begin(), common.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  rep.registered = static_cast<int>(common.size());
  if (common.size() < 3) throw Error(ErrorCode::InvalidArgument, "fewer than 3 common cameras");

  for (int i = 0; i < rep.total; ++i) {
    for (int j = i + 1; j < rep.total; ++j) {
      rep.diameter = std::max(rep.diameter, (scene.poses[i].center() - scene.poses[j].center()).norm());
    }
  }

  // Truth point of each reconstructed point, read off its first labeled observation.
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> point_pairs;
  for (const ScenePoint& pt : recon.points) {
    for (const PointObservation& o : pt.observations) {
      const int cam = recon_to_truth[o.image];
      if (cam < 0 || o.feature >= static_cast<int>(data.feature_point[cam].size())) continue;
      point_pairs.emplace_back(pt.position, scene.points[data.feature_point[cam][o.feature]]);
      break;
    }
  }

  Eigen::Matrix3Xd src(3, common.size()), dst(3, common.size());
  for (size_t k = 0; k < common.size(); ++k) {
    src.col(k) = recon.poses.at(common[k].first).center();
    dst.col(k) = scene.poses[common[k].second].center();
  }
  const Eigen::Matrix3Xd centered = dst.colwise() - dst.rowwise().mean();
  const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3Xd>(centered).singularValues();
  if (sv(1) <= 1e-9 * sv(0) && !point_pairs.empty()) {
    const Eigen::Index base = src.cols();
    src.conservativeResize(3, base + point_pairs.size());
    dst.conservativeResize(3, base + point_pairs.size());
    for (size_t k = 0; k < point_pairs.size(); ++k) {
      src.col(base + k) = point_pairs[k].first;
      dst.col(base + k) = point_pairs[k].second;
    }
  }
  const Eigen::Matrix4d sim = Eigen::umeyama(src, dst, true);
  rep.scale = sim.block<3, 1>(0, 0).norm();
  rep.rotation = project_to_rotation(sim.block<3, 3>(0, 0) / rep.scale);
  rep.translation = sim.block<3, 1>(0, 3);
  auto to_truth = [&](const Eigen::Vector3d& x) -> Eigen::Vector3d {
    return rep.scale * (rep.rotation * x) + rep.translation;
  };

  for (const auto& [img, cam] : common) {
    const Pose& est = recon.poses.at(img);
    CameraError err;
    err.name = scene.names[cam];
    err.rotation_deg =
        rotation_angle_between(scene.poses[cam].rotation(), est.rotation() * rep.rotation.transpose()) * 180.0 / M_PI;
    err.center = (to_truth(est.center()) - scene.poses[cam].center()).norm() / rep.diameter;
    rep.max_rotation_deg = std::max(rep.max_rotation_deg, err.rotation_deg);
    rep.max_center = std::max(rep.max_center, err.center);
    rep.cameras.push_back(err);
  }
  double sq = 0.0;
  for (const auto& [est, truth] : point_pairs) sq += (to_truth(est) - truth).squaredNorm();
  rep.matched_points = static_cast<int>(point_pairs.size());
  rep.point_rms = point_pairs.empty() ? 0.0 : std::sqrt(sq / point_pairs.size());
  return rep;
}

void write_truth(const std::filesystem::path& path, const SyntheticScene& scene, const SyntheticDataset& data) {
  Reconstruction recon;
  for (size_t i = 0; i < scene.poses.size(); ++i) {
    recon.images.push_back({scene.names[i], scene.dims});
    recon.poses[static_cast<int>(i)] = scene.poses[i];
  }
  for (size_t p = 0; p < scene.points.size(); ++p) {
    ScenePoint pt;
    pt.position = scene.points[p];
    pt.color = scene.colors[p];
    pt.track_id = static_cast<std::int64_t>(p);
    recon.points.push_back(pt);
  }
  for (size_t i = 0; i < data.images.size(); ++i) {
    for (size_t f = 0; f < data.images[i].features.size(); ++f) {
      recon.points[data.feature_point[i][f]].observations.push_back(
          {static_cast<int>(i), static_cast<int>(f), data.images[i].features[f].pix});
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_reconstruction(out, recon);
  out << "TRUTH\n";
  out << "LAYOUT " << to_string(scene.layout.kind) << ' ' << scene.layout.cameras << ' '
      << format_double(scene.layout.size) << '\n';
  out << "NOISE_PX " << format_double(scene.noise_px) << '\n';
  out << "OUTLIER_RATE " << format_double(scene.outlier_rate) << '\n';
  out << "SEED " << scene.rng_seed << '\n';
  out << "VISIBILITY " << format_double(scene.visibility_range) << '\n';
  std::vector<std::pair<int, int>> outliers;
  for (size_t i = 0; i < data.feature_inlier.size(); ++i) {
    for (size_t f = 0; f < data.feature_inlier[i].size(); ++f) {
      if (!data.feature_inlier[i][f]) outliers.emplace_back(static_cast<int>(i), static_cast<int>(f));
    }
  }
  out << "OUTLIERS " << outliers.size() << '\n';
  for (const auto& [i, f] : outliers) out << scene.names[i] << ' ' << f << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

std::pair<SyntheticScene, SyntheticDataset> read_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  TokenReader r(in, path.string());
  const Reconstruction recon = read_reconstruction(r);
  r.expect("TRUTH");

  SyntheticScene scene;
  SyntheticDataset data;
  const int n = static_cast<int>(recon.images.size());
  if (static_cast<int>(recon.poses.size()) != n) r.fail("truth must register every camera");
  for (int i = 0; i < n; ++i) {
    scene.names.push_back(recon.images[i].name);
    scene.poses.push_back(recon.poses.at(i));
    ImageEntry img;
    img.name = recon.images[i].name;
    img.intrinsics = Intrinsics(recon.images[i].dims);
    data.images.push_back(img);
  }
  if (n > 0) scene.dims = recon.images[0].dims;
  data.feature_point.resize(n);
  data.feature_inlier.resize(n);
  for (size_t p = 0; p < recon.points.size(); ++p) {
    const ScenePoint& pt = recon.points[p];
    if (pt.track_id != static_cast<std::int64_t>(p)) r.fail("truth points must be numbered in order");
    scene.points.push_back(pt.position);
    scene.colors.push_back(pt.color);
    for (const PointObservation& o : pt.observations) {
      auto& feats = data.images[o.image].features;
      if (o.feature >= static_cast<int>(feats.size())) {
        feats.resize(o.feature + 1);
        data.feature_point[o.image].resize(o.feature + 1, -1);
        data.feature_inlier[o.image].resize(o.feature + 1, true);
      }
      feats[o.feature].pix = o.pixel;
      data.feature_point[o.image][o.feature] = static_cast<int>(p);
    }
  }
  r.expect("LAYOUT");
  const auto kind = parse_layout(r.next());
  if (!kind) r.fail("unknown layout");
  scene.layout.kind = *kind;
  scene.layout.cameras = static_cast<int>(r.next_int());
  scene.layout.size = r.next_double();
  r.expect("NOISE_PX");
  scene.noise_px = r.next_double();
  r.expect("OUTLIER_RATE");
  scene.outlier_rate = r.next_double();
  r.expect("SEED");
  {
    const std::string tok = r.next();
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), scene.rng_seed);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) r.fail("bad seed");
  }
  r.expect("VISIBILITY");
  scene.visibility_range = r.next_double();
  r.expect("OUTLIERS");
  const long long k = r.next_int();
  std::map<std::string, int> by_name;
  for (int i = 0; i < n; ++i) by_name[scene.names[i]] = i;
  for (long long j = 0; j < k; ++j) {
    const std::string name = r.next();
    const long long f = r.next_int();
    auto it = by_name.find(name);
    if (it == by_name.end() || f < 0 || f >= static_cast<long long>(data.feature_inlier[it->second].size())) {
      r.fail("bad outlier entry");
    }
    data.feature_inlier[it->second][f] = false;
  }
  for (int i = 0; i < n; ++i) {
    for (int p : data.feature_point[i]) {
      if (p < 0) r.fail("feature without a truth point in " + scene.names[i]);
    }
  }
  return {scene, data};
}

}  // namespace sphsfm
