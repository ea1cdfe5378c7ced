#include <gtest/gtest.h>

#include <random>

#include "sphsfm/feature_match.hpp"
#include "sphsfm/synthetic.hpp"
#include "test_support.hpp"

using namespace sphsfm;

namespace {

Feature feature_with(const Eigen::VectorXd& d) {
  Feature f;
  f.descriptor = d.normalized();
  return f;
}

Eigen::VectorXd random_descriptor(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd d(kDefaultDescriptorDim);
  for (int k = 0; k < d.size(); ++k) d[k] = n(rng);
  return d.normalized();
}

}  // namespace

TEST(PairSelection, ExhaustiveListsEveryPairOnce) {
  const auto pairs = select_pairs(4, PairSelectionPolicy::make_exhaustive());
  const std::vector<IndexPair> want = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  EXPECT_EQ(pairs, want);
}

TEST(PairSelection, SequentialKeepsNeighbours) {
  const auto pairs = select_pairs(4, PairSelectionPolicy::make_sequential(1));
  const std::vector<IndexPair> want = {{0, 1}, {1, 2}, {2, 3}};
  EXPECT_EQ(pairs, want);
}

TEST(PairSelection, SpatialUsesPositions) {
  std::vector<std::optional<Eigen::Vector3d>> pos = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0),
                                                     Eigen::Vector3d(10, 0, 0)};
  const auto pairs = select_pairs(3, PairSelectionPolicy::make_spatial(2.0), pos);
  const std::vector<IndexPair> want = {{0, 1}};
  EXPECT_EQ(pairs, want);
}

TEST(DescriptorMatching, IdenticalDescriptorsMatch) {
  std::mt19937_64 rng(41);
  std::vector<Feature> a, b;
  for (int k = 0; k < 20; ++k) a.push_back(feature_with(random_descriptor(rng)));
  for (int k = 19; k >= 0; --k) b.push_back(a[k]);
  const auto m = match_descriptors(a, b);
  ASSERT_EQ(m.size(), 20u);
  for (const auto& [i, j] : m) EXPECT_EQ(j, 19 - i);
}

TEST(DescriptorMatching, AmbiguousMatchFailsTheRatioTest) {
  std::mt19937_64 rng(42);
  const Eigen::VectorXd base = random_descriptor(rng);
  const Eigen::VectorXd other = random_descriptor(rng);
  // Two candidates at almost the same distance from the query.
  std::vector<Feature> a = {feature_with(base)};
  std::vector<Feature> b = {feature_with(base + 0.2 * other), feature_with(base + 0.21 * other)};
  EXPECT_TRUE(match_descriptors(a, b).empty());
}

TEST(DescriptorMatching, DistantNeighbourIsRejected) {
  std::mt19937_64 rng(43);
  std::vector<Feature> a = {feature_with(random_descriptor(rng))};
  std::vector<Feature> b = {feature_with(random_descriptor(rng))};
  EXPECT_TRUE(match_descriptors(a, b).empty());
}

TEST(Tracks, UnionFindMergesChainsAndDropsConflicts) {
  MatchGraph g;
  g.images.resize(3);
  for (auto& img : g.images) img.features.resize(4);
  auto pair = [](int a, int b, std::vector<IndexPair> m) {
    MatchPair p;
    p.image_a = a;
    p.image_b = b;
    p.matches = std::move(m);
    p.inlier_mask.assign(p.matches.size(), true);
    p.verified = true;
    return p;
  };
  // Track 0 -> 0:0, 1:0, 2:0. Features 0:1 and 0:2 are both linked to 1:1, so that track is dropped.
  g.pairs.push_back(pair(0, 1, {{0, 0}, {1, 1}, {2, 1}}));
  g.pairs.push_back(pair(1, 2, {{0, 0}}));
  const auto tracks = build_tracks(g);
  ASSERT_EQ(tracks.size(), 1u);
  const std::vector<TrackObservation> want = {{0, 0}, {1, 0}, {2, 0}};
  EXPECT_EQ(tracks[0].observations, want);
}

TEST(MatchGraph, FullOverlapConnectsAllPairs) {
  SyntheticScene scene = generate(Layout::ring(3, 5.0), 200, {2000, 1000}, 44);
  const SyntheticDataset data = observe(scene);
  MatchGraphParams params;
  params.verify.ransac.rng_seed = 1;
  const MatchGraph g = build_match_graph(data.images, params);
  int verified = 0;
  for (const auto& p : g.pairs) verified += p.verified ? 1 : 0;
  EXPECT_EQ(g.pairs.size(), 3u);
  EXPECT_EQ(verified, 3);
  EXPECT_EQ(g.tracks.size(), 200u);
}

TEST(MatchGraph, DisjointScenesShareNoVerifiedPair) {
  const SyntheticDataset a = observe(generate(Layout::ring(2, 5.0), 100, {2000, 1000}, 45));
  const SyntheticDataset b = observe(generate(Layout::ring(2, 5.0), 100, {2000, 1000}, 46));
  MatchGraphParams params;
  const MatchGraph g = build_match_graph({a.images[0], b.images[1]}, params);
  ASSERT_EQ(g.pairs.size(), 1u);
  EXPECT_FALSE(g.pairs[0].verified);
}

TEST(MatchGraph, ThreadCountDoesNotChangeTheResult) {
  SyntheticScene scene = generate(Layout::ring(6, 5.0), 150, {2000, 1000}, 47);
  scene.outlier_rate = 0.2;
  const SyntheticDataset data = observe(scene);
  MatchGraphParams params;
  params.verify.ransac.rng_seed = 5;
  params.threads = 1;
  const MatchGraph g1 = build_match_graph(data.images, params);
  params.threads = 4;
  const MatchGraph g4 = build_match_graph(data.images, params);
  ASSERT_EQ(g1.pairs.size(), g4.pairs.size());
  for (size_t k = 0; k < g1.pairs.size(); ++k) {
    EXPECT_EQ(g1.pairs[k].matches, g4.pairs[k].matches);
    EXPECT_EQ(g1.pairs[k].inlier_mask, g4.pairs[k].inlier_mask);
  }
  ASSERT_EQ(g1.tracks.size(), g4.tracks.size());
}

TEST(MatchGraph, VerifiedInliersAgreeWithTruthLabels) {
  SyntheticScene scene = generate(Layout::ring(2, 5.0), 100, {2000, 1000}, 48);
  scene.outlier_rate = 0.15;
  const SyntheticDataset data = observe(scene);
  MatchGraphParams params;
  const MatchGraph g = build_match_graph(data.images, params);
  ASSERT_TRUE(g.pairs[0].verified);
  int wrong = 0;
  for (size_t k = 0; k < g.pairs[0].matches.size(); ++k) {
    const auto [fa, fb] = g.pairs[0].matches[k];
    const bool truth = data.feature_inlier[0][fa] && data.feature_inlier[1][fb];
    wrong += truth != g.pairs[0].inlier_mask[k] ? 1 : 0;
  }
  EXPECT_LE(wrong, 2);
}
