#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sphsfm/error.hpp"
#include "sphsfm/image.hpp"
#include "sphsfm/io.hpp"
#include "sphsfm/synthetic.hpp"

using namespace sphsfm;
namespace fs = std::filesystem;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sphsfm_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
};

Reconstruction small_reconstruction() {
  Reconstruction r;
  r.images = {{"a.jpg", {400, 200}}, {"b.jpg", {400, 200}}, {"c.jpg", {400, 200}}};
  std::mt19937_64 rng(3);
  r.poses[0] = Pose();
  r.poses[2] = Pose::from_center(random_rotation(rng), {0.1, 1.0 / 3.0, -2e-7});
  for (int k = 0; k < 3; ++k) {
    ScenePoint pt;
    pt.position = Eigen::Vector3d(k + 0.1, -k / 7.0, 5.0 + k);
    pt.color = {static_cast<std::uint8_t>(k), 128, 255};
    pt.track_id = 10 + k;
    pt.observations = {{0, k, {200.25 + k, 100.5}}, {2, 7 + k, {10.0 / 3.0, 99.0}}};
    r.points.push_back(pt);
  }
  return r;
}

}  // namespace

TEST(Numbers, FormatRoundTripsExactly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int k = 0; k < 10000; ++k) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    ASSERT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_THROW(parse_double("1.5x"), Error);
  EXPECT_THROW(parse_double(""), Error);
  EXPECT_THROW(format_double(std::nan("")), Error);
}

TEST_F(IoTest, FeaturesRoundTrip) {
  const SyntheticDataset d = observe(generate(Layout::ring(2, 5.0), 20, {400, 200}, 2));
  write_features(dir_ / "a.feats", d.images[0].features);
  const auto back = read_features(dir_ / "a.feats");
  ASSERT_EQ(back.size(), d.images[0].features.size());
  EXPECT_EQ(back[3].descriptor, d.images[0].features[3].descriptor);
  write_features(dir_ / "b.feats", back);
  EXPECT_EQ(slurp(dir_ / "a.feats"), slurp(dir_ / "b.feats"));
  EXPECT_EQ(slurp(dir_ / "a.feats").substr(0, 14), "FEATS 20 128\n" + std::string(1, slurp(dir_ / "a.feats")[13]));
}

TEST_F(IoTest, MatchesRoundTrip) {
  SyntheticScene s = generate(Layout::ring(3, 5.0), 60, {1000, 500}, 3);
  s.outlier_rate = 0.2;
  const SyntheticDataset d = observe(s);
  const MatchGraph g = build_match_graph(d.images, MatchGraphParams{});
  write_matches(dir_ / "m1.txt", g);
  MatchGraph g2;
  g2.images = d.images;
  read_matches(dir_ / "m1.txt", g2);
  write_matches(dir_ / "m2.txt", g2);
  EXPECT_EQ(slurp(dir_ / "m1.txt"), slurp(dir_ / "m2.txt"));
  ASSERT_EQ(g2.pairs.size(), g.pairs.size());
  EXPECT_EQ(g2.tracks.size(), g.tracks.size());
  EXPECT_EQ(*g2.pairs[0].essential, *g.pairs[0].essential);
}

TEST_F(IoTest, ReconstructionRoundTrip) {
  const Reconstruction r = small_reconstruction();
  write_reconstruction(dir_ / "r1.txt", r);
  const Reconstruction back = read_reconstruction(dir_ / "r1.txt");
  write_reconstruction(dir_ / "r2.txt", back);
  EXPECT_EQ(slurp(dir_ / "r1.txt"), slurp(dir_ / "r2.txt"));
  EXPECT_EQ(back.images.size(), 3u);
  EXPECT_EQ(back.poses.size(), 2u);
  EXPECT_EQ(back.points[1].observations.size(), 2u);
  const std::string text = slurp(dir_ / "r1.txt");
  EXPECT_EQ(text.rfind("CAMERAS 2\n", 0), 0u);
  EXPECT_NE(text.find("UNREGISTERED 1\nb.jpg 400 200\n"), std::string::npos);
}

TEST_F(IoTest, MalformedReconstructionReportsTheLine) {
  std::ofstream(dir_ / "bad.txt") << "CAMERAS 1\na.jpg 400 200 1 0 0 0 0 0 zero\n";
  try {
    read_reconstruction(dir_ / "bad.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Format);
  }
}

TEST_F(IoTest, PlyAsciiAndBinaryAgree) {
  const Reconstruction r = small_reconstruction();
  write_ply(dir_ / "a.ply", r, false);
  write_ply(dir_ / "b.ply", r, true);
  const PlyCloud a = read_ply(dir_ / "a.ply");
  const PlyCloud b = read_ply(dir_ / "b.ply");
  ASSERT_EQ(a.positions.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(a.positions[k], b.positions[k]);
    EXPECT_EQ(a.positions[k], r.points[k].position.cast<float>());
    EXPECT_EQ(a.colors[k], r.points[k].color);
  }
  EXPECT_NE(slurp(dir_ / "a.ply").find("element vertex 3\n"), std::string::npos);
  EXPECT_EQ(slurp(dir_ / "b.ply").size(),
            slurp(dir_ / "b.ply").find("end_header\n") + std::string("end_header\n").size() + 3 * 15);
}

TEST_F(IoTest, EmptyPlyIsRefusedWithoutWriting) {
  Reconstruction r;
  EXPECT_THROW(write_ply(dir_ / "e.ply", r, false), Error);
  EXPECT_FALSE(fs::exists(dir_ / "e.ply"));
}

TEST_F(IoTest, PositionsAndImageListRoundTrip) {
  write_positions(dir_ / "positions.txt", {{"a.jpg", {1.5, -2, 3}}, {"b.jpg", {0, 0, 1e-3}}});
  const auto pos = read_positions(dir_ / "positions.txt");
  EXPECT_EQ(pos.at("a.jpg"), Eigen::Vector3d(1.5, -2, 3));
  write_image_list(dir_ / "images.txt", {{"a.jpg", {5640, 2820}}});
  EXPECT_EQ(read_image_list(dir_ / "images.txt")[0].dims, (ImageDims{5640, 2820}));
}

TEST_F(IoTest, ReportListsEveryImage) {
  std::ostringstream out;
  write_report(out, small_reconstruction());
  const std::string text = out.str();
  EXPECT_NE(text.find("registered 2/3\n"), std::string::npos);
  EXPECT_NE(text.find("points 3\n"), std::string::npos);
  EXPECT_NE(text.find("\nb.jpg no 0 - -\n"), std::string::npos);
}

TEST_F(IoTest, ImageLoadingAcceptsPanoramasAndWarnsOnOthers) {
  write_png(dir_ / "pano.png", RgbImage(200, 100, {1, 2, 3}));
  write_png(dir_ / "wide.png", RgbImage(201, 100));
  write_png(dir_ / "square.png", RgbImage(100, 80));
  std::ofstream(dir_ / "broken.jpg") << "not an image";
  std::ofstream(dir_ / "positions.txt") << "pano.png 1 2 3\n";
  const LoadImagesResult res = load_images(dir_);
  ASSERT_EQ(res.images.size(), 2u);
  EXPECT_EQ(res.images[0].name, "pano.png");
  EXPECT_EQ(*res.images[0].position, Eigen::Vector3d(1, 2, 3));
  EXPECT_EQ(res.images[0].raster.at(5, 5)[2], 3);
  EXPECT_EQ(res.warnings.size(), 2u);
  LoadImagesOptions opts;
  opts.skip_erp_check = true;
  EXPECT_EQ(load_images(dir_, opts).images.size(), 3u);
}

TEST(ErpAspect, CommonPanoramaSizesAreAccepted) {
  EXPECT_TRUE(is_erp_aspect({5640, 2820}));
  EXPECT_TRUE(is_erp_aspect({5400, 2700}));
  EXPECT_FALSE(is_erp_aspect({1000, 800}));
}

TEST_F(IoTest, MissingOrEmptyDirectoryIsAnError) {
  EXPECT_THROW(load_images(dir_ / "nope"), Error);
  EXPECT_THROW(load_images(dir_), Error);
}
