#pragma once

// Match-pair selection, descriptor matching, geometric verification and tracks.

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sphsfm/sphere_geometry.hpp"
#include "sphsfm/two_view.hpp"

namespace sphsfm {

inline constexpr int kDefaultDescriptorDim = 128;

struct Feature {
  PixelCoord pix;
  double scale = 1.0;
  double orientation = 0.0;
  Eigen::VectorXd descriptor;  // unit L2 norm
};

using Color = std::array<std::uint8_t, 3>;

struct ImageEntry {
  std::string name;
  Intrinsics intrinsics;
  std::vector<Feature> features;
  /// Optional per-feature colors; empty means unknown.
  std::vector<Color> colors;
  std::optional<Eigen::Vector3d> position;
};

using IndexPair = std::pair<int, int>;

struct MatchPair {
  int image_a = 0;
  int image_b = 0;
  std::vector<IndexPair> matches;
  bool verified = false;
  std::vector<bool> inlier_mask;
  std::optional<Eigen::Matrix3d> essential;
  /// Why verification failed, empty otherwise.
  std::string reason;

  int num_inliers() const;
};

struct TrackObservation {
  int image = 0;
  int feature = 0;
  bool operator==(const TrackObservation&) const = default;
  auto operator<=>(const TrackObservation&) const = default;
};

struct Track {
  std::int64_t id = 0;
  std::vector<TrackObservation> observations;  // sorted by image
};

struct MatchGraph {
  std::vector<ImageEntry> images;
  std::vector<MatchPair> pairs;
  std::vector<Track> tracks;

  int find_image(const std::string& name) const;
};

/// Union of the enabled constraints; exhaustive overrides the others.
struct PairSelectionPolicy {
  bool exhaustive = false;
  std::optional<int> sequential_overlap;
  std::optional<double> spatial_max_distance;  // meters

  static PairSelectionPolicy make_exhaustive() { return {true, std::nullopt, std::nullopt}; }
  static PairSelectionPolicy make_sequential(int k) { return {false, k, std::nullopt}; }
  static PairSelectionPolicy make_spatial(double d) { return {false, std::nullopt, d}; }
};

/// Sorted, duplicate-free pairs (a < b). `positions` is required for the spatial constraint.
std::vector<IndexPair> select_pairs(int num_images, const PairSelectionPolicy& policy,
                                    std::span<const std::optional<Eigen::Vector3d>> positions = {});

struct DescriptorMatchOptions {
  double ratio = 0.8;
  double max_distance = 0.7;
  bool cross_check = true;
};

/// Exact nearest-neighbour matching with ratio and distance tests, then mutual-best filtering.
std::vector<IndexPair> match_descriptors(std::span<const Feature> fa, std::span<const Feature> fb,
                                         const DescriptorMatchOptions& options = {});

struct VerifyOptions {
  RansacParams ransac;
  int min_inliers = 15;
};

/// Essential-matrix RANSAC over the pair's matches. Never throws for geometric
/// failures: the pair comes back unverified with `reason` set.
MatchPair verify_pair(const MatchPair& pair, const ImageEntry& image_a, const ImageEntry& image_b,
                      const VerifyOptions& options = {});

struct MatchGraphParams {
  PairSelectionPolicy policy = PairSelectionPolicy::make_exhaustive();
  DescriptorMatchOptions matching;
  VerifyOptions verify;
  int threads = 1;
};

/// Seed for the RANSAC of the k-th selected pair, independent of scheduling.
std::uint64_t pair_seed(std::uint64_t base, std::uint64_t pair_index);

/// Matches and verifies every selected pair, then builds tracks.
MatchGraph build_match_graph(std::vector<ImageEntry> images, const MatchGraphParams& params);

/// Verifies already-populated pairs (e.g. loaded from a match file) in place.
void verify_pairs(MatchGraph& graph, const VerifyOptions& options, int threads);

/// Union-find over verified inlier matches; tracks touching an image twice are dropped.
std::vector<Track> build_tracks(const MatchGraph& graph);

/// Verified inlier counts normalized by the largest pair count (diagnostic).
Eigen::MatrixXd match_weight_matrix(const MatchGraph& graph);

}  // namespace sphsfm
