#include "sphsfm/sift_detector.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/features2d.hpp>
#include <opencv2/imgproc.hpp>

#include "sphsfm/error.hpp"

namespace sphsfm {

std::vector<Feature> detect_features(const RgbImage& image, int max_features) {
  if (max_features < 1) throw Error(ErrorCode::InvalidArgument, "max_features must be at least 1");
  if (image.empty()) throw Error(ErrorCode::Io, "empty image");
  cv::Mat gray(image.height, image.width, CV_8UC1);
  for (int y = 0; y < image.height; ++y) {
    auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      const std::uint8_t* px = image.at(x, y);
      row[x] = static_cast<std::uint8_t>(std::lround(0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]));
    }
  }
  cv::Ptr<cv::SIFT> sift = cv::SIFT::create();
  std::vector<cv::KeyPoint> keypoints;
  sift->detect(gray, keypoints);
  // Detection order depends on OpenCV's internal threading; impose a total order.
  std::sort(keypoints.begin(), keypoints.end(), [](const cv::KeyPoint& a, const cv::KeyPoint& b) {
    if (a.size != b.size) return a.size > b.size;
    if (a.response != b.response) return a.response > b.response;
    if (a.pt.y != b.pt.y) return a.pt.y < b.pt.y;
    if (a.pt.x != b.pt.x) return a.pt.x < b.pt.x;
    if (a.angle != b.angle) return a.angle < b.angle;
    return a.octave < b.octave;
  });
  if (static_cast<int>(keypoints.size()) > max_features) keypoints.resize(max_features);
  if (keypoints.empty()) return {};

  cv::Mat descriptors;
  std::vector<cv::KeyPoint> described = keypoints;
  sift->compute(gray, described, descriptors);
  std::vector<Feature> features;
  features.reserve(described.size());
  for (size_t i = 0; i < described.size(); ++i) {
    Feature f;
    // OpenCV keypoints are at pixel centers with (0, 0) the center of the first pixel.
    f.pix = {described[i].pt.x + 0.5, described[i].pt.y + 0.5};
    f.scale = described[i].size / 2.0;
    f.orientation = described[i].angle * M_PI / 180.0;
    f.descriptor.resize(descriptors.cols);
    for (int c = 0; c < descriptors.cols; ++c) f.descriptor(c) = descriptors.at<float>(static_cast<int>(i), c);
    const double n = f.descriptor.norm();
    if (n > 0.0) {
      f.descriptor /= n;
    } else {
      f.descriptor.setZero();
      f.descriptor(0) = 1.0;
    }
    features.push_back(std::move(f));
  }
  return features;
}

}  // namespace sphsfm
