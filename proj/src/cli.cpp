#include "sphsfm/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "sphsfm/cubemap.hpp"
#include "sphsfm/error.hpp"
#include "sphsfm/image.hpp"
#include "sphsfm/io.hpp"
#include "sphsfm/parallel.hpp"
#include "sphsfm/sfm_engine.hpp"
#include "sphsfm/sift_detector.hpp"
#include "sphsfm/synthetic.hpp"

namespace sphsfm {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

struct MatchingOptions {
  std::string pairs = "exhaustive";
  int overlap = 5;
  double max_distance = 50.0;
  int max_features = 8192;
  bool no_erp_check = false;
  double ratio = 0.8;
  double max_descriptor_distance = 0.7;
  int min_inliers = 15;
  double e_p = 4.0;
};

void add_matching_options(CLI::App* cmd, MatchingOptions& m) {
  cmd->add_option("--pairs", m.pairs, "Pair selection: exhaustive, sequential or spatial")
      ->check(CLI::IsMember({"exhaustive", "sequential", "spatial"}))
      ->capture_default_str();
  cmd->add_option("--overlap", m.overlap, "Neighbours per image for sequential pairs")->capture_default_str();
  cmd->add_option("--max-distance", m.max_distance, "Position radius for spatial pairs")->capture_default_str();
  cmd->add_option("--max-features", m.max_features, "Features kept per image")->capture_default_str();
  cmd->add_flag("--no-erp-check", m.no_erp_check, "Accept images that are not 2:1");
  cmd->add_option("--ratio", m.ratio, "Nearest-neighbour ratio test")->capture_default_str();
  cmd->add_option("--max-descriptor-distance", m.max_descriptor_distance)->capture_default_str();
  cmd->add_option("--min-inliers", m.min_inliers, "Inliers needed to keep a pair")->capture_default_str();
  cmd->add_option("--ep", m.e_p, "Epipolar threshold in pixels")->capture_default_str();
}

MatchGraphParams graph_params(const MatchingOptions& m, const GlobalOptions& g) {
  MatchGraphParams p;
  if (m.pairs == "sequential") p.policy = PairSelectionPolicy::make_sequential(m.overlap);
  else if (m.pairs == "spatial") p.policy = PairSelectionPolicy::make_spatial(m.max_distance);
  p.matching.ratio = m.ratio;
  p.matching.max_distance = m.max_descriptor_distance;
  p.verify.min_inliers = m.min_inliers;
  p.verify.ransac.e_p = m.e_p;
  p.verify.ransac.rng_seed = g.seed;
  p.threads = g.threads;
  return p;
}

fs::path feature_path(const fs::path& dir, const std::string& name) { return dir / "features" / (name + ".feats"); }

// A workspace directory holds images.txt, features/<name>.feats and optionally
// matches.txt and positions.txt. Anything else is treated as a folder of panoramas.
MatchGraph load_graph(const fs::path& input, const MatchingOptions& m, const GlobalOptions& g) {
  if (fs::exists(input / "images.txt")) {
    std::vector<ImageEntry> images;
    std::map<std::string, Eigen::Vector3d> positions;
    if (fs::exists(input / "positions.txt")) positions = read_positions(input / "positions.txt");
    for (const auto& entry : read_image_list(input / "images.txt")) {
      ImageEntry img;
      img.name = entry.name;
      img.intrinsics = Intrinsics(entry.dims);
      img.features = read_features(feature_path(input, entry.name));
      if (auto it = positions.find(entry.name); it != positions.end()) img.position = it->second;
      images.push_back(std::move(img));
    }
    if (images.empty()) throw Error(ErrorCode::Io, "no images listed in " + (input / "images.txt").string());
    if (fs::exists(input / "matches.txt")) {
      MatchGraph graph;
      graph.images = std::move(images);
      read_matches(input / "matches.txt", graph);
      return graph;
    }
    return build_match_graph(std::move(images), graph_params(m, g));
  }

  LoadImagesOptions lo;
  lo.skip_erp_check = m.no_erp_check;
  lo.threads = g.threads;
  LoadImagesResult loaded = load_images(input, lo);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
  std::vector<ImageEntry> images(loaded.images.size());
  parallel_for(static_cast<int>(images.size()), g.threads, [&](int i) {
    const LoadedImage& src = loaded.images[i];
    ImageEntry& img = images[i];
    img.name = src.name;
    img.intrinsics = Intrinsics(src.dims);
    img.position = src.position;
    img.features = detect_features(src.raster, m.max_features);
    for (const Feature& f : img.features) {
      const int x = std::clamp(static_cast<int>(f.pix.ix), 0, src.raster.width - 1);
      const int y = std::clamp(static_cast<int>(f.pix.iy), 0, src.raster.height - 1);
      const std::uint8_t* px = src.raster.at(x, y);
      img.colors.push_back({px[0], px[1], px[2]});
    }
  });
  return build_match_graph(std::move(images), graph_params(m, g));
}

void write_workspace(const fs::path& out, const MatchGraph& graph) {
  fs::create_directories(out / "features");
  std::vector<ImageListEntry> list;
  std::map<std::string, Eigen::Vector3d> positions;
  for (const auto& img : graph.images) {
    list.push_back({img.name, img.intrinsics.dims});
    write_features(feature_path(out, img.name), img.features);
    if (img.position) positions[img.name] = *img.position;
  }
  write_image_list(out / "images.txt", list);
  if (!positions.empty()) write_positions(out / "positions.txt", positions);
  write_matches(out / "matches.txt", graph);
  write_weight_matrix_csv(out / "weights.csv", graph);
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Structure from motion for equirectangular panoramas"};
  app.name("sphsfm");
  app.require_subcommand(1);
  app.set_config("--config", "", "INI or TOML file; command-line flags take precedence");

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  MatchingOptions match_opts;
  fs::path match_images, match_out;
  auto* match = app.add_subcommand("match", "Detect, match and verify features");
  match->add_option("--images", match_images, "Panorama folder or feature workspace")->required();
  match->add_option("--out", match_out, "Workspace directory to write")->required();
  add_matching_options(match, match_opts);

  MatchingOptions sfm_match_opts;
  EnginePolicy policy;
  fs::path sfm_input, sfm_out;
  auto* sfm = app.add_subcommand("sfm", "Run incremental reconstruction");
  sfm->add_option("--input", sfm_input, "Panorama folder or feature workspace")->required();
  sfm->add_option("--out", sfm_out, "Output directory")->required();
  sfm->add_option("--min-obs", policy.min_obs_for_registration, "2D-3D links needed to try an image")
      ->capture_default_str();
  sfm->add_option("--max-reproj", policy.max_reproj_px, "Reprojection filter in pixels")->capture_default_str();
  sfm->add_option("--seed-min-inliers", policy.seed_min_inliers)->capture_default_str();
  sfm->add_option("--seed-min-angle", policy.seed_min_tri_angle_deg)->capture_default_str();
  add_matching_options(sfm, sfm_match_opts);

  fs::path cube_recon, cube_images, cube_out;
  int face_size = 1024;
  auto* cube = app.add_subcommand("cubemap", "Export cube faces and face cameras for dense matching");
  cube->add_option("--recon", cube_recon, "Reconstruction file")->required()->check(CLI::ExistingFile);
  cube->add_option("--images", cube_images, "Folder holding the panoramas")->required();
  cube->add_option("--out", cube_out, "Output directory")->required();
  cube->add_option("--face-size", face_size, "Face width and height in pixels")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::string layout_name = "ring";
  int cameras = 20, num_points = 500, width = 4000, height = 2000;
  std::optional<double> layout_size;
  double noise = 0.0, outliers = 0.0;
  fs::path synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene with planted features");
  synth->add_option("--layout", layout_name)
      ->check(CLI::IsMember({"ring", "corridor", "two_floors"}))
      ->capture_default_str();
  synth->add_option("--cameras", cameras)->capture_default_str();
  synth->add_option("--points", num_points)->capture_default_str();
  synth->add_option("--size", layout_size, "Ring radius or corridor spacing (default 10 or 3)");
  synth->add_option("--noise", noise, "Pixel noise standard deviation")->capture_default_str();
  synth->add_option("--outliers", outliers, "Fraction of observations replaced at random")->capture_default_str();
  synth->add_option("--width", width)->capture_default_str();
  synth->add_option("--height", height)->capture_default_str();
  synth->add_option("--out", synth_out, "Workspace directory to write")->required();

  fs::path eval_recon, eval_truth;
  auto* eval = app.add_subcommand("eval", "Compare a reconstruction with a synthetic truth file");
  eval->add_option("--recon", eval_recon)->required()->check(CLI::ExistingFile);
  eval->add_option("--truth", eval_truth)->required()->check(CLI::ExistingFile);

  fs::path ply_recon, ply_out;
  bool ply_binary = false;
  auto* ply = app.add_subcommand("export-ply", "Write the sparse points as PLY");
  ply->add_option("--recon", ply_recon)->required()->check(CLI::ExistingFile);
  ply->add_option("--out", ply_out)->required();
  ply->add_flag("--binary", ply_binary, "binary_little_endian instead of ascii");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*match) {
      const MatchGraph graph = load_graph(match_images, match_opts, g);
      write_workspace(match_out, graph);
      int verified = 0;
      for (const auto& p : graph.pairs) verified += p.verified ? 1 : 0;
      std::cout << graph.images.size() << " images, " << graph.pairs.size() << " pairs, " << verified
                << " verified, " << graph.tracks.size() << " tracks\n";
    } else if (*sfm) {
      const auto start = std::chrono::steady_clock::now();
      const MatchGraph graph = load_graph(sfm_input, sfm_match_opts, g);
      policy.ransac.e_p = sfm_match_opts.e_p;
      policy.ransac.rng_seed = g.seed;
      const Reconstruction recon = run_sfm(graph, policy);
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      fs::create_directories(sfm_out);
      write_reconstruction(sfm_out / "reconstruction.txt", recon);
      std::ofstream report(sfm_out / "report.txt", std::ios::binary);
      write_report(report, recon, elapsed);
      write_report(std::cout, recon, elapsed);
    } else if (*cube) {
      const Reconstruction recon = read_reconstruction(cube_recon);
      CubemapExportOptions opts;
      opts.face_size = face_size;
      opts.threads = g.threads;
      const int faces = export_for_mvs(
          recon, [&](int i) { return read_image(cube_images / recon.images[i].name); }, cube_out, opts);
      std::cout << faces << " faces written to " << cube_out.string() << '\n';
    } else if (*synth) {
      const auto kind = *parse_layout(layout_name);
      Layout layout{kind, cameras, layout_size.value_or(kind == LayoutKind::Corridor ? 3.0 : 10.0)};
      if (kind == LayoutKind::TwoFloors && !layout_size) layout = Layout::two_floors(cameras);
      SyntheticScene scene = generate(layout, num_points, {width, height}, g.seed);
      scene.noise_px = noise;
      scene.outlier_rate = outliers;
      const SyntheticDataset data = observe(scene);
      fs::create_directories(synth_out / "features");
      std::vector<ImageListEntry> list;
      std::map<std::string, Eigen::Vector3d> positions;
      for (const auto& img : data.images) {
        list.push_back({img.name, img.intrinsics.dims});
        write_features(feature_path(synth_out, img.name), img.features);
        positions[img.name] = *img.position;
      }
      write_image_list(synth_out / "images.txt", list);
      write_positions(synth_out / "positions.txt", positions);
      write_truth(synth_out / "truth.txt", scene, data);
      std::cout << scene.poses.size() << " cameras, " << scene.points.size() << " points written to "
                << synth_out.string() << '\n';
    } else if (*eval) {
      const Reconstruction recon = read_reconstruction(eval_recon);
      const auto [scene, data] = read_truth(eval_truth);
      const AlignmentReport rep = compare_reconstruction(recon, scene, data);
      std::cout << "registered " << rep.registered << '/' << rep.total << '\n';
      if (rep.registered == rep.total) {
        std::cout << "all cameras registered\n";
      } else {
        std::cout << "unregistered:";
        for (int img : recon.unregistered()) std::cout << ' ' << recon.images[img].name;
        std::cout << '\n';
      }
      std::cout << "max_rotation_error_deg " << format_double(rep.max_rotation_deg) << '\n'
                << "max_center_error " << format_double(rep.max_center) << '\n'
                << "point_rms " << format_double(rep.point_rms) << " (" << rep.matched_points << " points)\n";
      for (const auto& cam : rep.cameras) {
        std::cout << cam.name << ' ' << format_double(cam.rotation_deg) << ' ' << format_double(cam.center) << '\n';
      }
    } else if (*ply) {
      write_ply(ply_out, read_reconstruction(ply_recon), ply_binary);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace sphsfm
