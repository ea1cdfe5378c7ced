#include <gtest/gtest.h>

#include "sphsfm/error.hpp"
#include "sphsfm/sfm_engine.hpp"
#include "sphsfm/synthetic.hpp"
#include "test_support.hpp"

using namespace sphsfm;
using namespace sphsfm::testing;

namespace {

const ImageDims kDims{4000, 2000};

MatchGraph matched(const SyntheticDataset& d, std::uint64_t seed = 1) {
  MatchGraphParams params;
  params.verify.ransac.rng_seed = seed;
  return build_match_graph(d.images, params);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

}  // namespace

TEST(DistributionScore, SinglePixelOccupiesOneCellPerLevel) {
  const std::vector<PixelCoord> px = {{10, 10}};
  EXPECT_DOUBLE_EQ(IncrementalEngine::distribution_score(px, kDims, 6), 2 + 4 + 8 + 16 + 32 + 64);
}

TEST(DistributionScore, FullCoverageFillsEveryCell) {
  std::vector<PixelCoord> px;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) px.push_back({(x + 0.5) * kDims.width / 64.0, (y + 0.5) * kDims.height / 64.0});
  }
  double want = 0;
  for (int l = 1; l <= 6; ++l) want += std::pow(2.0, l) * std::pow(4.0, l);
  EXPECT_DOUBLE_EQ(IncrementalEngine::distribution_score(px, kDims, 6), want);
}

TEST(DistributionScore, SpreadBeatsClustered) {
  std::vector<PixelCoord> clustered, spread;
  for (int k = 0; k < 50; ++k) {
    clustered.push_back({100.0 + k, 100.0});
    spread.push_back({80.0 * k, 40.0 * k});
  }
  EXPECT_GT(IncrementalEngine::distribution_score(spread, kDims, 6),
            IncrementalEngine::distribution_score(clustered, kDims, 6));
}

TEST(Seed, RingProvidesAWideAnglePair) {
  const SyntheticScene s = generate(Layout::ring(10, 10.0), 300, kDims, 51);
  const MatchGraph g = matched(observe(s));
  EngineLog log;
  IncrementalEngine engine(g, EnginePolicy{}, &log);
  const SeedResult seed = engine.select_seed_pair();
  EXPECT_GT(seed.num_inliers, 100);
  EXPECT_GT(seed.median_tri_angle_deg, 16.0);
  ASSERT_FALSE(log.seed_attempts.empty());
  EXPECT_TRUE(log.seed_attempts.back().accepted);
  for (size_t k = 0; k + 1 < log.seed_attempts.size(); ++k) EXPECT_FALSE(log.seed_attempts[k].accepted);
}

TEST(Seed, PureRotationHasNoSeed) {
  SyntheticScene s = generate(Layout::ring(4, 10.0), 200, kDims, 52);
  std::mt19937_64 rng(52);
  for (auto& p : s.poses) p = Pose::from_center(random_rotation(rng), Eigen::Vector3d::Zero());
  const MatchGraph g = matched(observe(s));
  IncrementalEngine engine(g, EnginePolicy{});
  EXPECT_EQ(code_of([&] { engine.select_seed_pair(); }), ErrorCode::NoSeed);
}

TEST(Seed, InitializationTriangulatesTheSeedTracks) {
  const SyntheticScene s = generate(Layout::ring(6, 10.0), 200, kDims, 53);
  const MatchGraph g = matched(observe(s));
  IncrementalEngine engine(g, EnginePolicy{});
  engine.initialize(engine.select_seed_pair());
  const Reconstruction& r = engine.reconstruction();
  EXPECT_GE(r.points.size(), 190u);
  EXPECT_LT(r.reprojection_stats().first, 1e-6);
  EXPECT_TRUE(audit(r, 4.0).empty());
}

TEST(Seed, PointsAlongTheBaselineCollapse) {
  // Every point sits close to the line through both centers: no parallax anywhere.
  SyntheticScene s = generate(Layout::ring(2, 10.0), 200, kDims, 54);
  const Eigen::Vector3d c0 = s.poses[0].center(), c1 = s.poses[1].center();
  std::mt19937_64 rng(54);
  std::uniform_real_distribution<double> u(2.0, 6.0);
  for (auto& p : s.points) p = c1 + u(rng) * (c1 - c0) + 1e-3 * random_unit_vector(rng);
  const MatchGraph g = matched(observe(s));
  IncrementalEngine engine(g, EnginePolicy{});
  SeedResult seed;
  seed.image_a = 0;
  seed.image_b = 1;
  seed.pose.rotation = s.poses[1].rotation() * s.poses[0].rotation().transpose();
  seed.pose.translation = (s.poses[1].translation() - seed.pose.rotation * s.poses[0].translation()).normalized();
  EXPECT_EQ(code_of([&] { engine.initialize(seed); }), ErrorCode::SeedCollapse);
}

TEST(Engine, RegistersEveryRingCamera) {
  const SyntheticScene s = generate(Layout::ring(12, 10.0), 300, kDims, 55);
  const SyntheticDataset d = observe(s);
  const Reconstruction r = run_sfm(matched(d), EnginePolicy{});
  EXPECT_EQ(r.poses.size(), 12u);
  const AlignmentReport rep = compare_reconstruction(r, s, d);
  EXPECT_LT(rep.max_center, 1e-6);
  EXPECT_LT(r.reprojection_stats().second, 1e-5);
  EXPECT_TRUE(audit(r, 4.0).empty());
}

TEST(Engine, NoisyNextImageIsRegisteredAccurately) {
  SyntheticScene s = generate(Layout::ring(8, 10.0), 300, kDims, 56);
  s.noise_px = 1.0;
  const SyntheticDataset d = observe(s);
  const Reconstruction r = run_sfm(matched(d), EnginePolicy{});
  ASSERT_EQ(r.poses.size(), 8u);
  EXPECT_LT(compare_reconstruction(r, s, d).max_rotation_deg, 0.1);
}

TEST(Engine, DisconnectedClustersReconstructTheSeedSideOnly) {
  const SyntheticScene a = generate(Layout::ring(5, 10.0), 200, kDims, 57);
  const SyntheticScene b = generate(Layout::ring(4, 10.0), 200, kDims, 58);
  SyntheticDataset da = observe(a), db = observe(b);
  std::vector<ImageEntry> images = da.images;
  for (auto img : db.images) {
    img.name = "other_" + img.name;
    images.push_back(img);
  }
  MatchGraphParams params;
  const MatchGraph g = build_match_graph(images, params);
  const Reconstruction r = run_sfm(g, EnginePolicy{});
  EXPECT_EQ(r.poses.size(), 5u);
  const auto missing = r.unregistered();
  ASSERT_EQ(missing.size(), 4u);
  for (int img : missing) EXPECT_EQ(r.images[img].name.rfind("other_", 0), 0u);
}

TEST(Engine, CandidatesBelowTheObservationThresholdAreSkipped) {
  const SyntheticScene s = generate(Layout::ring(8, 10.0), 300, kDims, 59);
  const MatchGraph g = matched(observe(s));
  EnginePolicy policy;
  EngineLog log;
  run_sfm(g, policy, &log);
  ASSERT_FALSE(log.selections.empty());
  for (const auto& sel : log.selections) {
    for (const auto& c : sel.candidates) EXPECT_EQ(c.eligible, c.num_obs >= policy.min_obs_for_registration);
  }
}

TEST(Engine, InvalidPolicyIsRejected) {
  EnginePolicy policy;
  policy.max_reproj_px = 0.0;
  EXPECT_THROW(validate(policy), Error);
}
