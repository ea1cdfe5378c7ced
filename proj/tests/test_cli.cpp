#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string output;
};

CliResult run(const std::string& args) {
  const std::string cmd = std::string(SPHSFM_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), out};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sphsfm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpExitsZero) {
  const CliResult r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("sfm"), std::string::npos);
}

TEST_F(CliTest, UnknownFlagIsAUsageError) {
  EXPECT_EQ(run("--bogus").code, 1);
  EXPECT_EQ(run("sfm --input x --out y --bogus").code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("synth --layout hexagon --out x").code, 1);
}

TEST_F(CliTest, SfmOnEmptyDirectoryFails) {
  fs::create_directories(dir_ / "empty");
  const CliResult r = run("sfm --input " + path("empty") + " --out " + path("out"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("no images"), std::string::npos);
}

TEST_F(CliTest, SynthSfmEvalEndToEnd) {
  ASSERT_EQ(run("--seed 7 synth --layout ring --cameras 20 --points 500 --out " + path("ws")).code, 0);
  ASSERT_EQ(run("--seed 7 sfm --input " + path("ws") + " --out " + path("out")).code, 0);
  const CliResult e = run("eval --recon " + path("out/reconstruction.txt") + " --truth " + path("ws/truth.txt"));
  EXPECT_EQ(e.code, 0);
  EXPECT_NE(e.output.find("all cameras registered"), std::string::npos);
  EXPECT_EQ(run("export-ply --recon " + path("out/reconstruction.txt") + " --out " + path("p.ply")).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "p.ply"));
}

TEST_F(CliTest, ConfigFileSuppliesDefaultsAndFlagsWin) {
  std::ofstream(dir_ / "cfg.toml") << "seed = 3\n[synth]\ncameras = 4\npoints = 40\n";
  ASSERT_EQ(run("--config " + path("cfg.toml") + " synth --out " + path("a")).code, 0);
  const CliResult r = run("--config " + path("cfg.toml") + " synth --cameras 5 --out " + path("b"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("5 cameras, 40 points"), std::string::npos);
}

TEST_F(CliTest, MatchWritesAWorkspaceThatSfmCanResume) {
  ASSERT_EQ(run("--seed 1 synth --cameras 6 --points 200 --out " + path("ws")).code, 0);
  ASSERT_EQ(run("--seed 1 match --images " + path("ws") + " --out " + path("m")).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "m" / "matches.txt"));
  EXPECT_TRUE(fs::exists(dir_ / "m" / "weights.csv"));
  EXPECT_EQ(run("--seed 1 sfm --input " + path("m") + " --out " + path("out")).code, 0);
}

TEST_F(CliTest, PipelineFailuresExitTwo) {
  std::ofstream(dir_ / "bad.txt") << "garbage\n";
  EXPECT_EQ(run("export-ply --recon " + path("bad.txt") + " --out " + path("x.ply")).code, 2);
  EXPECT_EQ(run("sfm --input " + path("missing") + " --out " + path("o")).code, 2);
}
