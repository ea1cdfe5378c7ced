#pragma once

// Text and PLY formats shared by the pipeline stages. Floats are written with
// the shortest representation that reads back to the same double, so every
// writer/reader pair round-trips byte for byte.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "sphsfm/feature_match.hpp"
#include "sphsfm/sfm_engine.hpp"

namespace sphsfm {

std::string format_double(double value);
/// Throws Format on anything that is not a complete decimal number.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

/// Whitespace tokenizer over a stream that reports the line of each token.
class TokenReader {
 public:
  TokenReader(std::istream& in, std::string source);
  /// Next token; throws Format at end of input.
  std::string next();
  std::optional<std::string> try_next();
  double next_double() { return parse_double(next()); }
  long long next_int() { return parse_int(next()); }
  /// Throws Format unless the next token equals `keyword`.
  void expect(std::string_view keyword);
  [[noreturn]] void fail(const std::string& message) const;

 private:
  std::istream& in_;
  std::string source_;
  int line_ = 1;
};

void write_features(const std::filesystem::path& path, const std::vector<Feature>& features);
std::vector<Feature> read_features(const std::filesystem::path& path);

/// Every pair with its raw matches; verified pairs also carry INLIERS and E lines.
void write_matches(const std::filesystem::path& path, const MatchGraph& graph);
/// Fills graph.pairs (image names resolved against graph.images) and rebuilds tracks.
void read_matches(const std::filesystem::path& path, MatchGraph& graph);

struct ImageListEntry {
  std::string name;
  ImageDims dims;
};
void write_image_list(const std::filesystem::path& path, const std::vector<ImageListEntry>& images);
std::vector<ImageListEntry> read_image_list(const std::filesystem::path& path);

void write_positions(const std::filesystem::path& path, const std::map<std::string, Eigen::Vector3d>& positions);
std::map<std::string, Eigen::Vector3d> read_positions(const std::filesystem::path& path);

void write_reconstruction(std::ostream& out, const Reconstruction& recon);
void write_reconstruction(const std::filesystem::path& path, const Reconstruction& recon);
/// Stops before a trailing TRUTH section, if any.
Reconstruction read_reconstruction(TokenReader& in);
Reconstruction read_reconstruction(const std::filesystem::path& path);

struct PlyCloud {
  std::vector<Eigen::Vector3f> positions;
  std::vector<Color> colors;
};

/// Throws InvalidArgument (and writes nothing) for an empty reconstruction.
void write_ply(const std::filesystem::path& path, const Reconstruction& recon, bool binary);
PlyCloud read_ply(const std::filesystem::path& path);

/// Plain-text summary; `elapsed_seconds` adds the efficiency line.
void write_report(std::ostream& out, const Reconstruction& recon, std::optional<double> elapsed_seconds = {});

void write_weight_matrix_csv(const std::filesystem::path& path, const MatchGraph& graph);

}  // namespace sphsfm
