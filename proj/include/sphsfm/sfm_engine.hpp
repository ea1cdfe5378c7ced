#pragma once

// Incremental reconstruction: seed pair, next-best-image registration,
// triangulation, and local/global bundle adjustment scheduling.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "sphsfm/bundle.hpp"
#include "sphsfm/feature_match.hpp"
#include "sphsfm/two_view.hpp"

namespace sphsfm {

struct EnginePolicy {
  int seed_min_inliers = 100;            // strict: inliers > this
  double seed_min_tri_angle_deg = 16.0;  // strict: median angle > this
  int min_obs_for_registration = 30;     // images with fewer 2D-3D links are skipped
  int local_ba_window = 3;               // images
  double global_ba_growth = 0.10;        // fraction of registered images / points
  RansacParams ransac;
  double max_reproj_px = 4.0;
  double min_tri_angle_point_deg = 1.5;
  int min_registration_inliers = 15;
  int max_registration_retries = 2;
  int score_levels = 6;
  BaOptions ba;
};

void validate(const EnginePolicy& policy);

struct PointObservation {
  int image = 0;
  int feature = 0;
  PixelCoord pixel;
};

struct ScenePoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Color color{128, 128, 128};
  std::int64_t track_id = -1;
  std::vector<PointObservation> observations;  // sorted by image, one per image
};

struct CameraInfo {
  std::string name;
  ImageDims dims;
};

struct Reconstruction {
  std::vector<CameraInfo> images;  // every image known to the run, indexed like the match graph
  std::map<int, Pose> poses;       // registered images only
  std::vector<ScenePoint> points;

  bool is_registered(int image) const { return poses.count(image) != 0; }
  std::vector<int> unregistered() const;
  /// Mean and RMS reprojection error over all observations, pixels.
  std::pair<double, double> reprojection_stats() const;
};

/// Returns human-readable violations of: >= 2 registered observing images per
/// point, one observation per image, cheirality in every observing camera, and
/// reprojection within `max_reproj_px` (plus a small slack).
std::vector<std::string> audit(const Reconstruction& recon, double max_reproj_px);

struct SeedResult {
  int image_a = -1;
  int image_b = -1;
  RelativePose pose;  // b relative to a, |T| = 1
  int num_inliers = 0;
  double median_tri_angle_deg = 0.0;
};

struct SeedAttempt {
  int image_a = -1;
  int image_b = -1;
  int num_inliers = 0;
  double median_tri_angle_deg = 0.0;
  bool accepted = false;
  std::string failure;
};

struct CandidateScore {
  int image = -1;
  int num_obs = 0;
  double score = 0.0;
  bool eligible = false;
};

struct SelectionEvent {
  std::vector<CandidateScore> candidates;
  int chosen = -1;
};

struct RegistrationEvent {
  int image = -1;
  int num_obs = 0;
  bool success = false;
  int num_inliers = 0;
  int new_points = 0;
  std::string failure;
};

enum class BaKind { Local, Global, Final };

struct BaEvent {
  BaKind kind = BaKind::Local;
  int registered = 0;
  int points = 0;
  /// Growth counters at the moment the scheduler decided (before reset).
  int images_since_global = 0;
  int points_since_global = 0;
  int registered_at_last_global = 0;
  int points_at_last_global = 0;
  double mean_reprojection_px = 0.0;
};

struct EngineLog {
  std::vector<SeedAttempt> seed_attempts;
  std::vector<SelectionEvent> selections;
  std::vector<RegistrationEvent> registrations;
  std::vector<BaEvent> ba_events;
  std::vector<int> registered_counts;  // after each loop iteration
};

class IncrementalEngine {
 public:
  IncrementalEngine(const MatchGraph& graph, EnginePolicy policy, EngineLog* log = nullptr);

  /// Throws NoSeed (with the best statistics found) when no pair qualifies.
  SeedResult select_seed_pair();
  /// Throws SeedCollapse when fewer than 3 points survive.
  void initialize(const SeedResult& seed);

  struct NextBest {
    int image = -1;
    double score = 0.0;
    int num_obs = 0;
  };
  /// Throws NoCandidate when every remaining image is below the observation threshold.
  NextBest next_best_image();

  /// Returns false (and defers the image) when resection fails.
  bool register_image(int image);

  /// Full loop from seed to final global bundle adjustment.
  void run();

  const Reconstruction& reconstruction() const { return recon_; }
  Reconstruction& reconstruction() { return recon_; }
  int num_observations(int image) const;
  /// Grid occupancy score of a set of pixels in an image.
  static double distribution_score(std::span<const PixelCoord> pixels, const ImageDims& dims, int levels);

 private:
  std::vector<std::pair<SpherePoint, SpherePoint>> pair_rays(const MatchPair& pair, int first,
                                                             bool inliers_only) const;
  const MatchPair* find_pair(int a, int b) const;
  int triangulate_tracks_for(int image);
  void extend_points_with(int image);
  void bundle_adjust(BaKind kind);
  void filter_points(const std::set<int>* only_points);
  void normalize_scale();
  void rebuild_track_index();
  Color feature_color(int image, int feature) const;

  const MatchGraph& graph_;
  EnginePolicy policy_;
  EngineLog* log_;
  Reconstruction recon_;
  std::vector<std::vector<std::int64_t>> feature_track_;  // [image][feature] -> track id or -1
  std::unordered_map<std::int64_t, size_t> track_index_;  // track id -> position in graph.tracks
  std::unordered_map<std::int64_t, int> track_point_;     // track id -> point index
  std::set<std::int64_t> rejected_tracks_;
  std::vector<int> registration_order_;
  std::map<int, int> failed_attempts_;
  std::map<int, int> registered_at_failure_;
  int seed_a_ = -1;
  int seed_b_ = -1;
  int images_since_global_ = 0;
  int points_since_global_ = 0;
  int registered_at_last_global_ = 0;
  int points_at_last_global_ = 0;
};

/// Convenience wrapper: seed, register until no candidate remains, final BA.
Reconstruction run_sfm(const MatchGraph& graph, const EnginePolicy& policy, EngineLog* log = nullptr);

}  // namespace sphsfm
