#pragma once

#include <vector>

#include "sphsfm/feature_match.hpp"
#include "sphsfm/image.hpp"

namespace sphsfm {

/// Difference-of-Gaussians keypoints with gradient-histogram descriptors.
/// Keeps at most `max_features`, preferring larger scales; descriptors are
/// L2-normalized. Output order is deterministic (scale descending).
std::vector<Feature> detect_features(const RgbImage& image, int max_features = 8192);

}  // namespace sphsfm
