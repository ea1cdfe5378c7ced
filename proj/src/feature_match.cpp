#include "sphsfm/feature_match.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "sphsfm/error.hpp"
#include "sphsfm/parallel.hpp"

namespace sphsfm {

int MatchPair::num_inliers() const {
  return static_cast<int>(std::count(inlier_mask.begin(), inlier_mask.end(), true));
}

int MatchGraph::find_image(const std::string& name) const {
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<IndexPair> select_pairs(int num_images, const PairSelectionPolicy& policy,
                                    std::span<const std::optional<Eigen::Vector3d>> positions) {
  if (policy.spatial_max_distance) {
    if (static_cast<int>(positions.size()) != num_images ||
        std::any_of(positions.begin(), positions.end(), [](const auto& p) { return !p.has_value(); })) {
      throw Error(ErrorCode::InvalidArgument, "spatial pair selection needs a position for every image");
    }
  }
  if (policy.sequential_overlap && *policy.sequential_overlap < 1) {
    throw Error(ErrorCode::InvalidArgument, "sequential overlap must be at least 1");
  }
  std::vector<IndexPair> pairs;
  for (int a = 0; a < num_images; ++a) {
    for (int b = a + 1; b < num_images; ++b) {
      bool take = policy.exhaustive;
      if (policy.sequential_overlap && b - a <= *policy.sequential_overlap) take = true;
      if (policy.spatial_max_distance &&
          (*positions[a] - *positions[b]).norm() <= *policy.spatial_max_distance) {
        take = true;
      }
      if (take) pairs.emplace_back(a, b);
    }
  }
  return pairs;
}

std::vector<IndexPair> match_descriptors(std::span<const Feature> fa, std::span<const Feature> fb,
                                         const DescriptorMatchOptions& options) {
  std::vector<IndexPair> out;
  if (fa.empty() || fb.empty()) return out;
  const Eigen::Index dim = fa.front().descriptor.size();
  for (const auto& f : fa) {
    if (f.descriptor.size() != dim) throw Error(ErrorCode::InvalidArgument, "descriptor size mismatch");
  }
  for (const auto& f : fb) {
    if (f.descriptor.size() != dim) throw Error(ErrorCode::InvalidArgument, "descriptor size mismatch");
  }
  const int na = static_cast<int>(fa.size());
  const int nb = static_cast<int>(fb.size());
  Eigen::MatrixXd b(dim, nb);
  Eigen::VectorXd b_sq(nb);
  for (int j = 0; j < nb; ++j) {
    b.col(j) = fb[j].descriptor;
    b_sq(j) = fb[j].descriptor.squaredNorm();
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> best_a(na, kInf), second_a(na, kInf);
  std::vector<int> best_a_idx(na, -1);
  std::vector<double> best_b(nb, kInf);
  std::vector<int> best_b_idx(nb, -1);

  constexpr int kChunk = 512;
  Eigen::MatrixXd a_chunk;
  for (int start = 0; start < na; start += kChunk) {
    const int rows = std::min(kChunk, na - start);
    a_chunk.resize(dim, rows);
    for (int i = 0; i < rows; ++i) a_chunk.col(i) = fa[start + i].descriptor;
    const Eigen::MatrixXd dots = a_chunk.transpose() * b;
    for (int i = 0; i < rows; ++i) {
      const int ia = start + i;
      const double a_sq = fa[ia].descriptor.squaredNorm();
      for (int j = 0; j < nb; ++j) {
        const double d = std::sqrt(std::max(0.0, a_sq + b_sq(j) - 2.0 * dots(i, j)));
        if (d < best_a[ia]) {
          second_a[ia] = best_a[ia];
          best_a[ia] = d;
          best_a_idx[ia] = j;
        } else if (d < second_a[ia]) {
          second_a[ia] = d;
        }
        if (d < best_b[j]) {
          best_b[j] = d;
          best_b_idx[j] = ia;
        }
      }
    }
  }

  for (int ia = 0; ia < na; ++ia) {
    const int jb = best_a_idx[ia];
    if (jb < 0) continue;
    const double d1 = best_a[ia];
    const double d2 = second_a[ia];
    if (!(d1 < options.max_distance)) continue;
    if (std::isfinite(d2) && !(d1 < options.ratio * d2)) continue;
    if (options.cross_check && best_b_idx[jb] != ia) continue;
    out.emplace_back(ia, jb);
  }
  return out;
}

MatchPair verify_pair(const MatchPair& pair, const ImageEntry& image_a, const ImageEntry& image_b,
                      const VerifyOptions& options) {
  MatchPair out = pair;
  out.verified = false;
  out.inlier_mask.assign(pair.matches.size(), false);
  out.essential.reset();
  out.reason.clear();
  if (pair.matches.size() < 8) {
    out.reason = to_string(ErrorCode::InsufficientMatches);
    return out;
  }
  std::vector<SpherePoint> p1, p2;
  p1.reserve(pair.matches.size());
  p2.reserve(pair.matches.size());
  for (const auto& [ia, ib] : pair.matches) {
    if (ia < 0 || ia >= static_cast<int>(image_a.features.size()) || ib < 0 ||
        ib >= static_cast<int>(image_b.features.size())) {
      throw Error(ErrorCode::InvalidArgument, "match index out of range");
    }
    p1.push_back(pixel_to_sphere(image_a.features[ia].pix, image_a.intrinsics));
    p2.push_back(pixel_to_sphere(image_b.features[ib].pix, image_b.intrinsics));
  }
  const ImageDims dims = image_a.intrinsics.dims.max_side() >= image_b.intrinsics.dims.max_side()
                             ? image_a.intrinsics.dims
                             : image_b.intrinsics.dims;
  try {
    EssentialRansacResult ransac = estimate_essential_ransac(p1, p2, dims, options.ransac);
    out.inlier_mask = std::move(ransac.inliers);
    out.essential = ransac.essential.matrix();
    if (ransac.num_inliers >= options.min_inliers) {
      out.verified = true;
    } else {
      out.reason = "TooFewInliers";
    }
  } catch (const Error& e) {
    out.reason = to_string(e.code());
  }
  return out;
}

std::uint64_t pair_seed(std::uint64_t base, std::uint64_t pair_index) {
  // splitmix64 of the combined value.
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (pair_index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void verify_pairs(MatchGraph& graph, const VerifyOptions& options, int threads) {
  parallel_for(static_cast<int>(graph.pairs.size()), threads, [&](int k) {
    MatchPair& pair = graph.pairs[k];
    VerifyOptions local = options;
    local.ransac.rng_seed = pair_seed(options.ransac.rng_seed, static_cast<std::uint64_t>(k));
    pair = verify_pair(pair, graph.images[pair.image_a], graph.images[pair.image_b], local);
  });
  graph.tracks = build_tracks(graph);
}

MatchGraph build_match_graph(std::vector<ImageEntry> images, const MatchGraphParams& params) {
  if (images.size() < 2) throw Error(ErrorCode::InvalidArgument, "match graph needs at least 2 images");
  MatchGraph graph;
  graph.images = std::move(images);
  std::vector<std::optional<Eigen::Vector3d>> positions;
  for (const auto& img : graph.images) positions.push_back(img.position);
  const std::vector<IndexPair> selected =
      select_pairs(static_cast<int>(graph.images.size()), params.policy, positions);
  graph.pairs.resize(selected.size());
  parallel_for(static_cast<int>(selected.size()), params.threads, [&](int k) {
    MatchPair& pair = graph.pairs[k];
    pair.image_a = selected[k].first;
    pair.image_b = selected[k].second;
    pair.matches = match_descriptors(graph.images[pair.image_a].features,
                                     graph.images[pair.image_b].features, params.matching);
  });
  verify_pairs(graph, params.verify, params.threads);
  return graph;
}

namespace {

class UnionFind {
 public:
  explicit UnionFind(size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), size_t{0}); }
  size_t find(size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(size_t a, size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<size_t> parent_;
};

}  // namespace

std::vector<Track> build_tracks(const MatchGraph& graph) {
  std::vector<size_t> offset(graph.images.size() + 1, 0);
  for (size_t i = 0; i < graph.images.size(); ++i) {
    offset[i + 1] = offset[i] + graph.images[i].features.size();
  }
  UnionFind uf(offset.back());
  std::vector<bool> touched(offset.back(), false);
  for (const auto& pair : graph.pairs) {
    if (!pair.verified) continue;
    for (size_t k = 0; k < pair.matches.size(); ++k) {
      if (!pair.inlier_mask[k]) continue;
      const size_t a = offset[pair.image_a] + pair.matches[k].first;
      const size_t b = offset[pair.image_b] + pair.matches[k].second;
      uf.unite(a, b);
      touched[a] = touched[b] = true;
    }
  }
  std::map<size_t, std::vector<TrackObservation>> groups;
  for (size_t i = 0; i < graph.images.size(); ++i) {
    for (size_t f = 0; f < graph.images[i].features.size(); ++f) {
      const size_t node = offset[i] + f;
      if (!touched[node]) continue;
      groups[uf.find(node)].push_back({static_cast<int>(i), static_cast<int>(f)});
    }
  }
  std::vector<Track> tracks;
  for (auto& [root, obs] : groups) {
    if (obs.size() < 2) continue;
    std::sort(obs.begin(), obs.end());
    bool duplicate = false;
    for (size_t k = 1; k < obs.size(); ++k) duplicate = duplicate || obs[k].image == obs[k - 1].image;
    if (duplicate) continue;
    tracks.push_back({static_cast<std::int64_t>(tracks.size()), std::move(obs)});
  }
  return tracks;
}

Eigen::MatrixXd match_weight_matrix(const MatchGraph& graph) {
  const int n = static_cast<int>(graph.images.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (const auto& pair : graph.pairs) {
    if (!pair.verified) continue;
    w(pair.image_a, pair.image_b) = w(pair.image_b, pair.image_a) = pair.num_inliers();
  }
  const double max = w.maxCoeff();
  if (max > 0.0) w /= max;
  return w;
}

}  // namespace sphsfm
