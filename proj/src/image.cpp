#include "sphsfm/image.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <cmath>
#include <opencv2/imgcodecs.hpp>

#include "sphsfm/error.hpp"
#include "sphsfm/io.hpp"
#include "sphsfm/parallel.hpp"

namespace sphsfm {

RgbImage::RgbImage(int w, int h, std::array<std::uint8_t, 3> fill) : width(w), height(h) {
  pixels.resize(3 * static_cast<size_t>(w) * static_cast<size_t>(h));
  for (size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill[0];
    pixels[i + 1] = fill[1];
    pixels[i + 2] = fill[2];
  }
}

RgbImage read_image(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(ErrorCode::Io, "cannot decode image " + path.string());
  RgbImage out(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      std::uint8_t* px = out.at(x, y);
      px[0] = row[x][2];
      px[1] = row[x][1];
      px[2] = row[x][0];
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      const std::uint8_t* px = image.at(x, y);
      row[x] = cv::Vec3b(px[2], px[1], px[0]);
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr, {cv::IMWRITE_PNG_COMPRESSION, 6});
  } catch (const cv::Exception&) {
    ok = false;
  }
  if (!ok) throw Error(ErrorCode::Io, "cannot write " + path.string());
}

bool is_erp_aspect(const ImageDims& dims) {
  if (dims.height <= 0) return false;
  const double ratio = static_cast<double>(dims.width) / dims.height;
  return std::abs(ratio / 2.0 - 1.0) <= 0.01;
}

LoadImagesResult load_images(const std::filesystem::path& dir, const LoadImagesOptions& options) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "no such directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<std::optional<RgbImage>> rasters(files.size());
  std::vector<std::string> errors(files.size());
  parallel_for(static_cast<int>(files.size()), options.threads, [&](int i) {
    try {
      rasters[i] = read_image(files[i]);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  std::map<std::string, Eigen::Vector3d> positions;
  if (fs::exists(dir / "positions.txt")) positions = read_positions(dir / "positions.txt");

  LoadImagesResult result;
  for (size_t i = 0; i < files.size(); ++i) {
    const std::string name = files[i].filename().string();
    if (!rasters[i]) {
      result.warnings.push_back("skipping " + name + ": " + errors[i]);
      continue;
    }
    LoadedImage img;
    img.name = name;
    img.dims = rasters[i]->dims();
    if (!is_erp_aspect(img.dims)) {
      if (!options.skip_erp_check) {
        result.warnings.push_back("skipping " + name + ": aspect ratio is not 2:1");
        continue;
      }
      result.warnings.push_back(name + ": aspect ratio is not 2:1");
    }
    img.raster = std::move(*rasters[i]);
    if (auto it = positions.find(name); it != positions.end()) img.position = it->second;
    result.images.push_back(std::move(img));
  }
  if (result.images.empty()) throw Error(ErrorCode::Io, "no images in " + dir.string());
  return result;
}

}  // namespace sphsfm
