#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sphsfm/sphere_geometry.hpp"

namespace sphsfm {

/// 8-bit interleaved RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::array<std::uint8_t, 3> fill = {0, 0, 0});

  std::uint8_t* at(int x, int y) { return &pixels[3 * (static_cast<size_t>(y) * width + x)]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[3 * (static_cast<size_t>(y) * width + x)];
  }
  ImageDims dims() const { return {width, height}; }
  bool empty() const { return width == 0 || height == 0; }
};

/// Decodes PNG/JPEG (anything OpenCV reads). Throws Io on failure.
RgbImage read_image(const std::filesystem::path& path);
/// Writes an 8-bit PNG. Throws Io on failure.
void write_png(const std::filesystem::path& path, const RgbImage& image);

struct LoadedImage {
  std::string name;  // file name without directory
  ImageDims dims;
  RgbImage raster;
  std::optional<Eigen::Vector3d> position;
};

struct LoadImagesOptions {
  /// Accept images whose aspect ratio is not 2:1 within 1%.
  bool skip_erp_check = false;
  int threads = 1;
};

struct LoadImagesResult {
  std::vector<LoadedImage> images;
  std::vector<std::string> warnings;
};

/// Loads every .png/.jpg/.jpeg in `dir` (sorted by name) plus GNSS positions from
/// `positions.txt` when present. Undecodable or non-ERP images are skipped with a
/// warning. Throws Io if the directory is missing or nothing loads.
LoadImagesResult load_images(const std::filesystem::path& dir, const LoadImagesOptions& options = {});

/// True when |W / H - 2| <= 2%, i.e. the aspect ratio is within 1% of 2:1.
bool is_erp_aspect(const ImageDims& dims);

}  // namespace sphsfm
