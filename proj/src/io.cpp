#include "sphsfm/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sphsfm/error.hpp"

namespace sphsfm {

namespace fs = std::filesystem;

std::string format_double(double value) {
  if (!std::isfinite(value)) throw Error(ErrorCode::NonFinite, "cannot serialize a non-finite value");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::Format, "not a number: '" + std::string(text) + "'");
  }
  return value;
}

long long parse_int(std::string_view text) {
  long long value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::Format, "not an integer: '" + std::string(text) + "'");
  }
  return value;
}

TokenReader::TokenReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

std::optional<std::string> TokenReader::try_next() {
  int c;
  while ((c = in_.peek()) != EOF && std::isspace(c)) {
    if (c == '\n') ++line_;
    in_.get();
  }
  if (c == EOF) return std::nullopt;
  std::string tok;
  while ((c = in_.peek()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(in_.get()));
  return tok;
}

std::string TokenReader::next() {
  auto tok = try_next();
  if (!tok) fail("unexpected end of file");
  return *tok;
}

void TokenReader::expect(std::string_view keyword) {
  const std::string tok = next();
  if (tok != keyword) fail("expected '" + std::string(keyword) + "', found '" + tok + "'");
}

void TokenReader::fail(const std::string& message) const {
  throw Error(ErrorCode::Format, source_ + ":" + std::to_string(line_) + ": " + message);
}

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  return in;
}

int next_count(TokenReader& r) {
  const long long n = r.next_int();
  if (n < 0 || n > (1LL << 31) - 1) r.fail("invalid count");
  return static_cast<int>(n);
}

}  // namespace

void write_features(const fs::path& path, const std::vector<Feature>& features) {
  const int dim = features.empty() ? kDefaultDescriptorDim : static_cast<int>(features.front().descriptor.size());
  std::ofstream out = open_out(path);
  out << "FEATS " << features.size() << ' ' << dim << '\n';
  for (const Feature& f : features) {
    if (f.descriptor.size() != dim) throw Error(ErrorCode::InvalidArgument, "descriptor sizes differ");
    out << format_double(f.pix.ix) << ' ' << format_double(f.pix.iy) << ' ' << format_double(f.scale) << ' '
        << format_double(f.orientation);
    for (int k = 0; k < dim; ++k) out << ' ' << format_double(f.descriptor[k]);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

std::vector<Feature> read_features(const fs::path& path) {
  std::ifstream in = open_in(path);
  TokenReader r(in, path.string());
  r.expect("FEATS");
  const int count = next_count(r);
  const int dim = next_count(r);
  std::vector<Feature> features(count);
  for (Feature& f : features) {
    f.pix.ix = r.next_double();
    f.pix.iy = r.next_double();
    f.scale = r.next_double();
    f.orientation = r.next_double();
    f.descriptor.resize(dim);
    for (int k = 0; k < dim; ++k) f.descriptor[k] = r.next_double();
  }
  if (r.try_next()) r.fail("trailing data");
  return features;
}

void write_matches(const fs::path& path, const MatchGraph& graph) {
  std::ofstream out = open_out(path);
  for (const MatchPair& p : graph.pairs) {
    out << "PAIR " << graph.images[p.image_a].name << ' ' << graph.images[p.image_b].name << ' '
        << p.matches.size() << '\n';
    for (const auto& [a, b] : p.matches) out << a << ' ' << b << '\n';
    if (p.verified) {
      out << "INLIERS ";
      for (bool bit : p.inlier_mask) out << (bit ? '1' : '0');
      out << '\n';
      if (p.essential) {
        out << "E";
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) out << ' ' << format_double((*p.essential)(i, j));
        }
        out << '\n';
      }
    }
  }
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

void read_matches(const fs::path& path, MatchGraph& graph) {
  std::ifstream in = open_in(path);
  TokenReader r(in, path.string());
  graph.pairs.clear();
  std::optional<std::string> tok = r.try_next();
  while (tok) {
    if (*tok != "PAIR") r.fail("expected PAIR, found '" + *tok + "'");
    MatchPair p;
    const std::string na = r.next();
    const std::string nb = r.next();
    p.image_a = graph.find_image(na);
    p.image_b = graph.find_image(nb);
    if (p.image_a < 0 || p.image_b < 0) r.fail("unknown image in pair " + na + " " + nb);
    const int count = next_count(r);
    const int na_feats = static_cast<int>(graph.images[p.image_a].features.size());
    const int nb_feats = static_cast<int>(graph.images[p.image_b].features.size());
    for (int k = 0; k < count; ++k) {
      const long long a = r.next_int();
      const long long b = r.next_int();
      if (a < 0 || a >= na_feats || b < 0 || b >= nb_feats) r.fail("feature index out of range");
      p.matches.emplace_back(static_cast<int>(a), static_cast<int>(b));
    }
    tok = r.try_next();
    if (tok && *tok == "INLIERS") {
      const std::string bits = count > 0 ? r.next() : std::string();
      if (static_cast<int>(bits.size()) != count) r.fail("inlier mask length mismatch");
      for (char c : bits) {
        if (c != '0' && c != '1') r.fail("bad inlier bit");
        p.inlier_mask.push_back(c == '1');
      }
      p.verified = true;
      tok = r.try_next();
    }
    if (tok && *tok == "E") {
      Eigen::Matrix3d e;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) e(i, j) = r.next_double();
      }
      p.essential = e;
      tok = r.try_next();
    }
    graph.pairs.push_back(std::move(p));
  }
  graph.tracks = build_tracks(graph);
}

void write_image_list(const fs::path& path, const std::vector<ImageListEntry>& images) {
  std::ofstream out = open_out(path);
  for (const auto& img : images) out << img.name << ' ' << img.dims.width << ' ' << img.dims.height << '\n';
}

std::vector<ImageListEntry> read_image_list(const fs::path& path) {
  std::ifstream in = open_in(path);
  TokenReader r(in, path.string());
  std::vector<ImageListEntry> out;
  while (auto name = r.try_next()) {
    ImageListEntry e;
    e.name = *name;
    e.dims.width = next_count(r);
    e.dims.height = next_count(r);
    validate(e.dims);
    out.push_back(e);
  }
  return out;
}

void write_positions(const fs::path& path, const std::map<std::string, Eigen::Vector3d>& positions) {
  std::ofstream out = open_out(path);
  for (const auto& [name, p] : positions) {
    out << name << ' ' << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z())
        << '\n';
  }
}

std::map<std::string, Eigen::Vector3d> read_positions(const fs::path& path) {
  std::ifstream in = open_in(path);
  TokenReader r(in, path.string());
  std::map<std::string, Eigen::Vector3d> out;
  while (auto name = r.try_next()) {
    Eigen::Vector3d p;
    for (int k = 0; k < 3; ++k) p[k] = r.next_double();
    out[*name] = p;
  }
  return out;
}

void write_reconstruction(std::ostream& out, const Reconstruction& recon) {
  out << "CAMERAS " << recon.poses.size() << '\n';
  for (const auto& [img, pose] : recon.poses) {
    const CameraInfo& cam = recon.images[img];
    const Eigen::Quaterniond& q = pose.quaternion();
    out << cam.name << ' ' << cam.dims.width << ' ' << cam.dims.height << ' ' << format_double(q.w()) << ' '
        << format_double(q.x()) << ' ' << format_double(q.y()) << ' ' << format_double(q.z()) << ' '
        << format_double(pose.translation().x()) << ' ' << format_double(pose.translation().y()) << ' '
        << format_double(pose.translation().z()) << '\n';
  }
  const std::vector<int> missing = recon.unregistered();
  if (!missing.empty()) {
    out << "UNREGISTERED " << missing.size() << '\n';
    for (int img : missing) {
      out << recon.images[img].name << ' ' << recon.images[img].dims.width << ' ' << recon.images[img].dims.height
          << '\n';
    }
  }
  out << "POINTS " << recon.points.size() << '\n';
  size_t num_obs = 0;
  for (const ScenePoint& pt : recon.points) {
    out << format_double(pt.position.x()) << ' ' << format_double(pt.position.y()) << ' '
        << format_double(pt.position.z()) << ' ' << int(pt.color[0]) << ' ' << int(pt.color[1]) << ' '
        << int(pt.color[2]) << ' ' << pt.track_id << '\n';
    num_obs += pt.observations.size();
  }
  out << "OBS " << num_obs << '\n';
  for (const ScenePoint& pt : recon.points) {
    for (const PointObservation& o : pt.observations) {
      out << pt.track_id << ' ' << recon.images[o.image].name << ' ' << o.feature << ' '
          << format_double(o.pixel.ix) << ' ' << format_double(o.pixel.iy) << '\n';
    }
  }
}

void write_reconstruction(const fs::path& path, const Reconstruction& recon) {
  std::ofstream out = open_out(path);
  write_reconstruction(out, recon);
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

Reconstruction read_reconstruction(TokenReader& r) {
  Reconstruction recon;
  std::map<std::string, int> by_name;
  auto add_image = [&](const std::string& name, ImageDims dims) {
    if (by_name.count(name)) r.fail("duplicate image " + name);
    validate(dims);
    by_name[name] = static_cast<int>(recon.images.size());
    recon.images.push_back({name, dims});
    return static_cast<int>(recon.images.size()) - 1;
  };

  r.expect("CAMERAS");
  const int num_cams = next_count(r);
  for (int k = 0; k < num_cams; ++k) {
    const std::string name = r.next();
    ImageDims dims;
    dims.width = next_count(r);
    dims.height = next_count(r);
    const int idx = add_image(name, dims);
    double v[7];
    for (double& x : v) x = r.next_double();
    recon.poses[idx] = Pose::from_quaternion(Eigen::Quaterniond(v[0], v[1], v[2], v[3]), {v[4], v[5], v[6]});
  }
  std::string tok = r.next();
  if (tok == "UNREGISTERED") {
    const int n = next_count(r);
    for (int k = 0; k < n; ++k) {
      const std::string name = r.next();
      ImageDims dims;
      dims.width = next_count(r);
      dims.height = next_count(r);
      add_image(name, dims);
    }
    tok = r.next();
  }
  if (tok != "POINTS") r.fail("expected POINTS, found '" + tok + "'");
  const int num_points = next_count(r);
  std::map<std::int64_t, int> by_track;
  recon.points.resize(num_points);
  for (int k = 0; k < num_points; ++k) {
    ScenePoint& pt = recon.points[k];
    for (int c = 0; c < 3; ++c) pt.position[c] = r.next_double();
    for (int c = 0; c < 3; ++c) {
      const long long v = r.next_int();
      if (v < 0 || v > 255) r.fail("color out of range");
      pt.color[c] = static_cast<std::uint8_t>(v);
    }
    pt.track_id = r.next_int();
    if (!by_track.emplace(pt.track_id, k).second) r.fail("duplicate track id");
  }
  r.expect("OBS");
  const int num_obs = next_count(r);
  for (int k = 0; k < num_obs; ++k) {
    const long long track = r.next_int();
    const std::string name = r.next();
    const long long feature = r.next_int();
    PointObservation o;
    o.pixel.ix = r.next_double();
    o.pixel.iy = r.next_double();
    auto pit = by_track.find(track);
    auto iit = by_name.find(name);
    if (pit == by_track.end()) r.fail("observation of unknown track");
    if (iit == by_name.end()) r.fail("observation in unknown image " + name);
    if (feature < 0) r.fail("negative feature index");
    o.image = iit->second;
    o.feature = static_cast<int>(feature);
    recon.points[pit->second].observations.push_back(o);
  }
  for (ScenePoint& pt : recon.points) {
    std::stable_sort(pt.observations.begin(), pt.observations.end(),
                     [](const auto& a, const auto& b) { return a.image < b.image; });
  }
  return recon;
}

Reconstruction read_reconstruction(const fs::path& path) {
  std::ifstream in = open_in(path);
  TokenReader r(in, path.string());
  Reconstruction recon = read_reconstruction(r);
  if (auto tok = r.try_next(); tok && *tok != "TRUTH") r.fail("unexpected '" + *tok + "'");
  return recon;
}

void write_ply(const fs::path& path, const Reconstruction& recon, bool binary) {
  if (recon.points.empty()) throw Error(ErrorCode::InvalidArgument, "empty reconstruction, nothing to export");
  for (const ScenePoint& pt : recon.points) {
    if (!pt.position.allFinite()) throw Error(ErrorCode::NonFinite, "non-finite point coordinate");
  }
  std::ofstream out = open_out(path);
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << recon.points.size() << '\n'
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n";
  for (const ScenePoint& pt : recon.points) {
    const Eigen::Vector3f p = pt.position.cast<float>();
    if (binary) {
      for (int c = 0; c < 3; ++c) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(p[c]);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        char bytes[4];
        std::memcpy(bytes, &bits, 4);
        out.write(bytes, 4);
      }
      out.write(reinterpret_cast<const char*>(pt.color.data()), 3);
    } else {
      char buf[32];
      for (int c = 0; c < 3; ++c) {
        const auto res = std::to_chars(buf, buf + sizeof buf, p[c]);
        out.write(buf, res.ptr - buf);
        out << ' ';
      }
      out << int(pt.color[0]) << ' ' << int(pt.color[1]) << ' ' << int(pt.color[2]) << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

PlyCloud read_ply(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  auto getline = [&]() {
    if (!std::getline(in, line)) throw Error(ErrorCode::Format, path.string() + ": truncated PLY header");
  };
  getline();
  if (line != "ply") throw Error(ErrorCode::Format, path.string() + ": not a PLY file");
  bool binary = false;
  long long count = -1;
  std::vector<std::string> props;
  for (getline(); line != "end_header"; getline()) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt != "ascii") throw Error(ErrorCode::Format, "unsupported PLY format " + fmt);
    } else if (key == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex") throw Error(ErrorCode::Format, "unsupported PLY element " + name);
    } else if (key == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(type + " " + name);
    }
  }
  const std::vector<std::string> expected = {"float x",     "float y",       "float z",
                                             "uchar red",   "uchar green",   "uchar blue"};
  if (props != expected || count < 0) throw Error(ErrorCode::Format, "unsupported PLY vertex layout");
  PlyCloud cloud;
  cloud.positions.resize(count);
  cloud.colors.resize(count);
  for (long long k = 0; k < count; ++k) {
    if (binary) {
      for (int c = 0; c < 3; ++c) {
        char bytes[4];
        in.read(bytes, 4);
        std::uint32_t bits;
        std::memcpy(&bits, bytes, 4);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        cloud.positions[k][c] = std::bit_cast<float>(bits);
      }
      in.read(reinterpret_cast<char*>(cloud.colors[k].data()), 3);
      if (!in) throw Error(ErrorCode::Format, "truncated PLY body");
    } else {
      std::string tok;
      for (int c = 0; c < 3; ++c) {
        if (!(in >> tok)) throw Error(ErrorCode::Format, "truncated PLY body");
        float v = 0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc()) throw Error(ErrorCode::Format, "bad PLY coordinate " + tok);
        cloud.positions[k][c] = v;
      }
      for (int c = 0; c < 3; ++c) {
        int v = -1;
        if (!(in >> v) || v < 0 || v > 255) throw Error(ErrorCode::Format, "bad PLY color");
        cloud.colors[k][c] = static_cast<std::uint8_t>(v);
      }
    }
  }
  return cloud;
}

void write_report(std::ostream& out, const Reconstruction& recon, std::optional<double> elapsed_seconds) {
  const auto [mean, rms] = recon.reprojection_stats();
  const size_t total = recon.images.size();
  out << "registered " << recon.poses.size() << '/' << total << '\n';
  out << "points " << recon.points.size() << '\n';
  out << "mean_reprojection_px " << format_double(mean) << '\n';
  out << "rms_reprojection_px " << format_double(rms) << '\n';
  if (elapsed_seconds) out << "efficiency_min " << format_double(*elapsed_seconds / 60.0) << '\n';
  out << "completeness " << recon.poses.size() << " images " << recon.points.size() << " points\n";
  out << "precision_px " << format_double(rms) << '\n';

  std::vector<int> obs(total, 0);
  std::vector<double> sum(total, 0.0), sum_sq(total, 0.0);
  for (const ScenePoint& pt : recon.points) {
    for (const PointObservation& o : pt.observations) {
      const double e = cost_rprj(recon.poses.at(o.image), pt.position, o.pixel, recon.images[o.image].dims).norm();
      ++obs[o.image];
      sum[o.image] += e;
      sum_sq[o.image] += e * e;
    }
  }
  out << "# image registered observations mean_px rms_px\n";
  for (size_t i = 0; i < total; ++i) {
    out << recon.images[i].name << ' ' << (recon.is_registered(static_cast<int>(i)) ? "yes" : "no") << ' '
        << obs[i];
    if (obs[i] > 0) {
      out << ' ' << format_double(sum[i] / obs[i]) << ' ' << format_double(std::sqrt(sum_sq[i] / obs[i]));
    } else {
      out << " - -";
    }
    out << '\n';
  }
}

void write_weight_matrix_csv(const fs::path& path, const MatchGraph& graph) {
  const Eigen::MatrixXd w = match_weight_matrix(graph);
  std::ofstream out = open_out(path);
  out << "image";
  for (const auto& img : graph.images) out << ',' << img.name;
  out << '\n';
  for (int i = 0; i < w.rows(); ++i) {
    out << graph.images[i].name;
    for (int j = 0; j < w.cols(); ++j) out << ',' << format_double(w(i, j));
    out << '\n';
  }
}

}  // namespace sphsfm
