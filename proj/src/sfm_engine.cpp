#include "sphsfm/sfm_engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sphsfm/error.hpp"
#include "sphsfm/resection.hpp"
#include "sphsfm/rotation.hpp"

namespace sphsfm {

namespace {

constexpr double kDeg = M_PI / 180.0;

double max_tri_angle(const ScenePoint& point, const std::map<int, Pose>& poses) {
  double best = 0.0;
  std::vector<Eigen::Vector3d> rays;
  for (const auto& obs : point.observations) rays.push_back(point.position - poses.at(obs.image).center());
  for (size_t i = 0; i < rays.size(); ++i) {
    for (size_t j = i + 1; j < rays.size(); ++j) best = std::max(best, angle_between(rays[i], rays[j]));
  }
  return best;
}

bool observation_ok(const Pose& pose, const Eigen::Vector3d& x, const PixelCoord& pixel,
                    const ImageDims& dims, double max_reproj_px) {
  const Eigen::Vector3d p = pose.transform(x);
  const SpherePoint ray = pixel_to_sphere(pixel, Intrinsics(dims));
  if (!(ray.vec().dot(p) > 0.0) || !(p.norm() > kDepthEpsilon)) return false;
  return cost_rprj(pose, x, pixel, dims).norm() <= max_reproj_px;
}

}  // namespace

void validate(const EnginePolicy& p) {
  validate(p.ransac);
  if (p.seed_min_inliers < 1 || p.seed_min_tri_angle_deg <= 0.0 || p.min_obs_for_registration < 1 ||
      p.local_ba_window < 1 || p.global_ba_growth <= 0.0 || p.max_reproj_px <= 0.0 ||
      p.min_tri_angle_point_deg <= 0.0 || p.score_levels < 1 || p.min_registration_inliers < 4 ||
      p.max_registration_retries < 0) {
    throw Error(ErrorCode::InvalidArgument, "engine policy thresholds must be positive");
  }
}

std::vector<int> Reconstruction::unregistered() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(images.size()); ++i) {
    if (!is_registered(i)) out.push_back(i);
  }
  return out;
}

std::pair<double, double> Reconstruction::reprojection_stats() const {
  double sum = 0.0, sum_sq = 0.0;
  size_t n = 0;
  for (const auto& point : points) {
    for (const auto& obs : point.observations) {
      const double e = cost_rprj(poses.at(obs.image), point.position, obs.pixel, images[obs.image].dims).norm();
      sum += e;
      sum_sq += e * e;
      ++n;
    }
  }
  if (n == 0) return {0.0, 0.0};
  return {sum / n, std::sqrt(sum_sq / n)};
}

std::vector<std::string> audit(const Reconstruction& recon, double max_reproj_px) {
  std::vector<std::string> issues;
  for (size_t i = 0; i < recon.points.size(); ++i) {
    const ScenePoint& pt = recon.points[i];
    std::ostringstream where;
    where << "point " << i << " (track " << pt.track_id << "): ";
    if (pt.observations.size() < 2) issues.push_back(where.str() + "fewer than two observations");
    for (size_t k = 0; k < pt.observations.size(); ++k) {
      const auto& obs = pt.observations[k];
      if (k > 0 && pt.observations[k - 1].image >= obs.image) {
        issues.push_back(where.str() + "observations not unique per image");
      }
      if (!recon.is_registered(obs.image)) {
        issues.push_back(where.str() + "observed by an unregistered image");
        continue;
      }
      const Pose& pose = recon.poses.at(obs.image);
      const ImageDims& dims = recon.images[obs.image].dims;
      const Eigen::Vector3d p = pose.transform(pt.position);
      if (!(pixel_to_sphere(obs.pixel, Intrinsics(dims)).vec().dot(p) > 0.0)) {
        issues.push_back(where.str() + "fails cheirality");
      } else if (cost_rprj(pose, pt.position, obs.pixel, dims).norm() > max_reproj_px + 1e-6) {
        issues.push_back(where.str() + "reprojection above threshold");
      }
    }
  }
  return issues;
}

IncrementalEngine::IncrementalEngine(const MatchGraph& graph, EnginePolicy policy, EngineLog* log)
    : graph_(graph), policy_(std::move(policy)), log_(log) {
  validate(policy_);
  for (const auto& img : graph_.images) recon_.images.push_back({img.name, img.intrinsics.dims});
  feature_track_.resize(graph_.images.size());
  for (size_t i = 0; i < graph_.images.size(); ++i) {
    feature_track_[i].assign(graph_.images[i].features.size(), -1);
  }
  for (size_t t = 0; t < graph_.tracks.size(); ++t) {
    const Track& track = graph_.tracks[t];
    track_index_[track.id] = t;
    for (const auto& obs : track.observations) feature_track_[obs.image][obs.feature] = track.id;
  }
}

const MatchPair* IncrementalEngine::find_pair(int a, int b) const {
  for (const auto& pair : graph_.pairs) {
    if ((pair.image_a == a && pair.image_b == b) || (pair.image_a == b && pair.image_b == a)) return &pair;
  }
  return nullptr;
}

std::vector<std::pair<SpherePoint, SpherePoint>> IncrementalEngine::pair_rays(const MatchPair& pair,
                                                                            int first,
                                                                            bool inliers_only) const {
  const bool flipped = pair.image_a != first;
  const ImageEntry& ia = graph_.images[pair.image_a];
  const ImageEntry& ib = graph_.images[pair.image_b];
  std::vector<std::pair<SpherePoint, SpherePoint>> rays;
  for (size_t k = 0; k < pair.matches.size(); ++k) {
    if (inliers_only && !(k < pair.inlier_mask.size() && pair.inlier_mask[k])) continue;
    const SpherePoint pa = pixel_to_sphere(ia.features[pair.matches[k].first].pix, ia.intrinsics);
    const SpherePoint pb = pixel_to_sphere(ib.features[pair.matches[k].second].pix, ib.intrinsics);
    rays.emplace_back(flipped ? pb : pa, flipped ? pa : pb);
  }
  return rays;
}

SeedResult IncrementalEngine::select_seed_pair() {
  const int n = static_cast<int>(graph_.images.size());
  std::vector<int> total(n, 0);
  for (const auto& pair : graph_.pairs) {
    if (!pair.verified) continue;
    total[pair.image_a] += pair.num_inliers();
    total[pair.image_b] += pair.num_inliers();
  }
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return total[a] > total[b]; });

  std::set<std::pair<int, int>> tried;
  SeedAttempt best;
  std::uint64_t attempt_index = 0;
  for (int first : order) {
    std::vector<std::pair<int, const MatchPair*>> associated;
    for (const auto& pair : graph_.pairs) {
      if (!pair.verified) continue;
      if (pair.image_a == first) associated.emplace_back(pair.image_b, &pair);
      if (pair.image_b == first) associated.emplace_back(pair.image_a, &pair);
    }
    std::stable_sort(associated.begin(), associated.end(), [](const auto& x, const auto& y) {
      if (x.second->num_inliers() != y.second->num_inliers()) {
        return x.second->num_inliers() > y.second->num_inliers();
      }
      return x.first < y.first;
    });
    for (const auto& [second, pair] : associated) {
      if (!tried.insert({std::min(first, second), std::max(first, second)}).second) continue;
      SeedAttempt attempt;
      attempt.image_a = first;
      attempt.image_b = second;
      RelativeOrientation ro;
      std::vector<std::pair<SpherePoint, SpherePoint>> rays;
      if (static_cast<int>(pair->matches.size()) <= policy_.seed_min_inliers) {
        attempt.num_inliers = pair->num_inliers();
        attempt.failure = "too few matches";
      } else {
        rays = pair_rays(*pair, first, false);
        std::vector<SpherePoint> p1, p2;
        for (const auto& [a, b] : rays) {
          p1.push_back(a);
          p2.push_back(b);
        }
        RansacParams params = policy_.ransac;
        params.rng_seed = pair_seed(policy_.ransac.rng_seed, 0x5eed000000ULL + attempt_index++);
        try {
          const ImageDims& dims = graph_.images[first].intrinsics.dims;
          ro = estimate_relative_orientation(p1, p2, dims, params);
          attempt.num_inliers = ro.num_inliers;
          std::vector<double> angles;
          const Pose identity;
          const Pose pose_b = ro.pose.to_pose();
          for (size_t k = 0; k < p1.size(); ++k) {
            if (!ro.inliers[k]) continue;
            try {
              angles.push_back(triangulate(identity, pose_b, p1[k], p2[k]).angle);
            } catch (const Error&) {
            }
          }
          if (!angles.empty()) {
            std::sort(angles.begin(), angles.end());
            const size_t m = angles.size();
            const double median = m % 2 ? angles[m / 2] : 0.5 * (angles[m / 2 - 1] + angles[m / 2]);
            attempt.median_tri_angle_deg = median / kDeg;
          }
          attempt.accepted = attempt.num_inliers > policy_.seed_min_inliers &&
                             attempt.median_tri_angle_deg > policy_.seed_min_tri_angle_deg;
          if (!attempt.accepted) attempt.failure = "below seed thresholds";
        } catch (const Error& e) {
          attempt.failure = to_string(e.code());
        }
      }
      if (log_) log_->seed_attempts.push_back(attempt);
      if (attempt.accepted) {
        SeedResult seed;
        seed.image_a = first;
        seed.image_b = second;
        seed.pose = ro.pose;
        seed.num_inliers = attempt.num_inliers;
        seed.median_tri_angle_deg = attempt.median_tri_angle_deg;
        return seed;
      }
      if (attempt.num_inliers > best.num_inliers ||
          (attempt.num_inliers == best.num_inliers &&
           attempt.median_tri_angle_deg > best.median_tri_angle_deg)) {
        best = attempt;
      }
    }
  }
  if (best.image_a < 0) throw Error(ErrorCode::NoSeed, "no verified image pair to start from");
  std::ostringstream msg;
  msg << "no pair with more than " << policy_.seed_min_inliers << " inliers and median angle above "
      << policy_.seed_min_tri_angle_deg << " deg; best was (" << best.image_a << ", " << best.image_b
      << ") with " << best.num_inliers << " inliers at " << best.median_tri_angle_deg << " deg";
  throw Error(ErrorCode::NoSeed, msg.str());
}

Color IncrementalEngine::feature_color(int image, int feature) const {
  const auto& colors = graph_.images[image].colors;
  if (feature < static_cast<int>(colors.size())) return colors[feature];
  return {128, 128, 128};
}

void IncrementalEngine::rebuild_track_index() {
  track_point_.clear();
  for (size_t i = 0; i < recon_.points.size(); ++i) track_point_[recon_.points[i].track_id] = static_cast<int>(i);
}

void IncrementalEngine::initialize(const SeedResult& seed) {
  recon_.poses.clear();
  recon_.points.clear();
  rejected_tracks_.clear();
  registration_order_.clear();
  seed_a_ = seed.image_a;
  seed_b_ = seed.image_b;
  recon_.poses[seed_a_] = Pose();
  recon_.poses[seed_b_] = seed.pose.to_pose();
  registration_order_ = {seed_a_, seed_b_};

  const Pose& pose_a = recon_.poses[seed_a_];
  const Pose& pose_b = recon_.poses[seed_b_];
  const ImageEntry& ia = graph_.images[seed_a_];
  const ImageEntry& ib = graph_.images[seed_b_];
  for (const Track& track : graph_.tracks) {
    const TrackObservation* oa = nullptr;
    const TrackObservation* ob = nullptr;
    for (const auto& obs : track.observations) {
      if (obs.image == seed_a_) oa = &obs;
      if (obs.image == seed_b_) ob = &obs;
    }
    if (!oa || !ob) continue;
    const PixelCoord xa = ia.features[oa->feature].pix;
    const PixelCoord xb = ib.features[ob->feature].pix;
    Triangulation tri;
    try {
      tri = triangulate(pose_a, pose_b, pixel_to_sphere(xa, ia.intrinsics), pixel_to_sphere(xb, ib.intrinsics));
    } catch (const Error&) {
      continue;
    }
    if (tri.angle < policy_.min_tri_angle_point_deg * kDeg) continue;
    if (!observation_ok(pose_a, tri.point, xa, ia.intrinsics.dims, policy_.max_reproj_px) ||
        !observation_ok(pose_b, tri.point, xb, ib.intrinsics.dims, policy_.max_reproj_px)) {
      continue;
    }
    ScenePoint pt;
    pt.position = tri.point;
    pt.track_id = track.id;
    pt.color = feature_color(oa->image, oa->feature);
    pt.observations = {{oa->image, oa->feature, xa}, {ob->image, ob->feature, xb}};
    std::sort(pt.observations.begin(), pt.observations.end(),
              [](const auto& x, const auto& y) { return x.image < y.image; });
    recon_.points.push_back(std::move(pt));
  }
  rebuild_track_index();
  if (recon_.points.size() >= 3) bundle_adjust(BaKind::Global);
  if (recon_.points.size() < 3) {
    throw Error(ErrorCode::SeedCollapse, "fewer than 3 seed points survive triangulation filters");
  }
  images_since_global_ = 0;
  points_since_global_ = 0;
  registered_at_last_global_ = static_cast<int>(recon_.poses.size());
  points_at_last_global_ = static_cast<int>(recon_.points.size());
}

int IncrementalEngine::num_observations(int image) const {
  int n = 0;
  for (std::int64_t t : feature_track_[image]) {
    if (t >= 0 && track_point_.count(t)) ++n;
  }
  return n;
}

double IncrementalEngine::distribution_score(std::span<const PixelCoord> pixels, const ImageDims& dims,
                                             int levels) {
  double score = 0.0;
  for (int l = 1; l <= levels; ++l) {
    const int cells = 1 << l;
    std::set<std::pair<int, int>> occupied;
    for (const auto& px : pixels) {
      const int cx = std::clamp(static_cast<int>(std::floor(px.ix / dims.width * cells)), 0, cells - 1);
      const int cy = std::clamp(static_cast<int>(std::floor(px.iy / dims.height * cells)), 0, cells - 1);
      occupied.insert({cx, cy});
    }
    score += static_cast<double>(cells) * static_cast<double>(occupied.size());
  }
  return score;
}

IncrementalEngine::NextBest IncrementalEngine::next_best_image() {
  SelectionEvent event;
  NextBest best;
  const int registered = static_cast<int>(recon_.poses.size());
  for (int img = 0; img < static_cast<int>(graph_.images.size()); ++img) {
    if (recon_.is_registered(img)) continue;
    if (auto it = failed_attempts_.find(img); it != failed_attempts_.end()) {
      if (it->second > policy_.max_registration_retries) continue;
      if (registered <= registered_at_failure_[img]) continue;
    }
    CandidateScore cand;
    cand.image = img;
    std::vector<PixelCoord> pixels;
    for (size_t f = 0; f < feature_track_[img].size(); ++f) {
      const std::int64_t t = feature_track_[img][f];
      if (t >= 0 && track_point_.count(t)) pixels.push_back(graph_.images[img].features[f].pix);
    }
    cand.num_obs = static_cast<int>(pixels.size());
    cand.eligible = cand.num_obs >= policy_.min_obs_for_registration;
    if (cand.eligible) {
      cand.score = distribution_score(pixels, graph_.images[img].intrinsics.dims, policy_.score_levels);
      if (best.image < 0 || cand.score > best.score ||
          (cand.score == best.score && cand.num_obs > best.num_obs)) {
        best = {img, cand.score, cand.num_obs};
      }
    }
    event.candidates.push_back(cand);
  }
  event.chosen = best.image;
  if (log_) log_->selections.push_back(event);
  if (best.image < 0) throw Error(ErrorCode::NoCandidate, "no unregistered image has enough observations");
  return best;
}

bool IncrementalEngine::register_image(int image) {
  RegistrationEvent event;
  event.image = image;
  const ImageEntry& entry = graph_.images[image];
  std::vector<Correspondence2D3D> corrs;
  std::vector<int> corr_feature;
  for (size_t f = 0; f < feature_track_[image].size(); ++f) {
    const std::int64_t t = feature_track_[image][f];
    auto it = t >= 0 ? track_point_.find(t) : track_point_.end();
    if (it == track_point_.end()) continue;
    corrs.push_back({pixel_to_sphere(entry.features[f].pix, entry.intrinsics),
                     recon_.points[it->second].position, t});
    corr_feature.push_back(static_cast<int>(f));
  }
  event.num_obs = static_cast<int>(corrs.size());

  auto fail = [&](const std::string& why) {
    event.failure = why;
    ++failed_attempts_[image];
    registered_at_failure_[image] = static_cast<int>(recon_.poses.size());
    if (log_) log_->registrations.push_back(event);
    return false;
  };
  if (corrs.size() < 4) return fail("fewer than 4 correspondences");

  RansacParams params = policy_.ransac;
  params.rng_seed = pair_seed(policy_.ransac.rng_seed,
                              0x7e9000000ULL + static_cast<std::uint64_t>(image) * 16 +
                                  static_cast<std::uint64_t>(failed_attempts_[image]));
  PoseRansacResult ransac;
  try {
    ransac = estimate_pose_ransac(corrs, entry.intrinsics.dims, params);
  } catch (const Error& e) {
    return fail(to_string(e.code()));
  }
  event.num_inliers = ransac.num_inliers;
  if (ransac.num_inliers < policy_.min_registration_inliers) return fail("too few resection inliers");

  // Pose-only refinement of the pixel reprojection cost with the scene held fixed.
  BaProblem problem;
  problem.cameras.push_back({ransac.pose, false, {false, false, false}});
  for (size_t k = 0; k < corrs.size(); ++k) {
    if (!ransac.inliers[k]) continue;
    problem.points.push_back({corrs[k].point, true});
    problem.observations.push_back({0, static_cast<int>(problem.points.size()) - 1,
                                    entry.features[corr_feature[k]].pix, entry.intrinsics.dims});
  }
  Pose pose = ransac.pose;
  try {
    solve(problem, policy_.ba);
    pose = problem.cameras[0].pose;
  } catch (const Error&) {
  }
  recon_.poses[image] = pose;
  registration_order_.push_back(image);
  extend_points_with(image);
  event.new_points = triangulate_tracks_for(image);
  event.success = true;
  ++images_since_global_;
  points_since_global_ += event.new_points;
  if (log_) log_->registrations.push_back(event);
  return true;
}

void IncrementalEngine::extend_points_with(int image) {
  const ImageEntry& entry = graph_.images[image];
  const Pose& pose = recon_.poses.at(image);
  for (size_t f = 0; f < feature_track_[image].size(); ++f) {
    const std::int64_t t = feature_track_[image][f];
    auto it = t >= 0 ? track_point_.find(t) : track_point_.end();
    if (it == track_point_.end()) continue;
    ScenePoint& pt = recon_.points[it->second];
    const bool present = std::any_of(pt.observations.begin(), pt.observations.end(),
                                     [&](const auto& o) { return o.image == image; });
    if (present) continue;
    const PixelCoord px = entry.features[f].pix;
    if (!observation_ok(pose, pt.position, px, entry.intrinsics.dims, policy_.max_reproj_px)) continue;
    pt.observations.push_back({image, static_cast<int>(f), px});
    std::sort(pt.observations.begin(), pt.observations.end(),
              [](const auto& x, const auto& y) { return x.image < y.image; });
  }
}

int IncrementalEngine::triangulate_tracks_for(int image) {
  int created = 0;
  for (size_t f = 0; f < feature_track_[image].size(); ++f) {
    const std::int64_t t = feature_track_[image][f];
    if (t < 0 || track_point_.count(t) || rejected_tracks_.count(t)) continue;
    const Track& track = graph_.tracks[track_index_.at(t)];
    std::vector<PointObservation> obs;
    for (const auto& o : track.observations) {
      if (recon_.is_registered(o.image)) {
        obs.push_back({o.image, o.feature, graph_.images[o.image].features[o.feature].pix});
      }
    }
    if (obs.size() < 2) continue;

    auto solve_point = [&](const std::vector<PointObservation>& subset) -> std::optional<Triangulation> {
      std::vector<Pose> poses;
      std::vector<SpherePoint> rays;
      for (const auto& o : subset) {
        poses.push_back(recon_.poses.at(o.image));
        rays.push_back(pixel_to_sphere(o.pixel, graph_.images[o.image].intrinsics));
      }
      try {
        return triangulate_multiview(poses, rays);
      } catch (const Error&) {
        return std::nullopt;
      }
    };

    std::optional<Triangulation> tri = solve_point(obs);
    std::vector<PointObservation> kept;
    if (tri) {
      for (const auto& o : obs) {
        if (observation_ok(recon_.poses.at(o.image), tri->point, o.pixel, graph_.images[o.image].intrinsics.dims,
                           policy_.max_reproj_px)) {
          kept.push_back(o);
        }
      }
    }
    if (kept.size() < 2) {
      // Fall back to the new view paired with each other view.
      kept.clear();
      tri.reset();
      const auto self = std::find_if(obs.begin(), obs.end(), [&](const auto& o) { return o.image == image; });
      if (self == obs.end()) continue;
      for (const auto& o : obs) {
        if (o.image == image) continue;
        std::vector<PointObservation> two = {*self, o};
        auto candidate = solve_point(two);
        if (!candidate) continue;
        bool ok = true;
        for (const auto& x : two) {
          ok = ok && observation_ok(recon_.poses.at(x.image), candidate->point, x.pixel,
                                    graph_.images[x.image].intrinsics.dims, policy_.max_reproj_px);
        }
        if (ok && (!tri || candidate->angle > tri->angle)) {
          tri = candidate;
          kept = two;
        }
      }
      if (!tri) continue;
    } else if (kept.size() < obs.size()) {
      tri = solve_point(kept);
      if (!tri) continue;
    }
    std::sort(kept.begin(), kept.end(), [](const auto& x, const auto& y) { return x.image < y.image; });
    ScenePoint pt;
    pt.position = tri->point;
    pt.track_id = t;
    pt.color = feature_color(kept.front().image, kept.front().feature);
    pt.observations = kept;
    bool valid = max_tri_angle(pt, recon_.poses) >= policy_.min_tri_angle_point_deg * kDeg;
    for (const auto& o : kept) {
      valid = valid && observation_ok(recon_.poses.at(o.image), pt.position, o.pixel,
                                      graph_.images[o.image].intrinsics.dims, policy_.max_reproj_px);
    }
    if (!valid) continue;
    track_point_[t] = static_cast<int>(recon_.points.size());
    recon_.points.push_back(std::move(pt));
    ++created;
  }
  return created;
}

void IncrementalEngine::normalize_scale() {
  if (seed_a_ < 0 || !recon_.is_registered(seed_a_) || !recon_.is_registered(seed_b_)) return;
  const Eigen::Vector3d origin = recon_.poses.at(seed_a_).center();
  const double baseline = (recon_.poses.at(seed_b_).center() - origin).norm();
  if (!(baseline > 0.0) || baseline == 1.0) return;
  const double s = 1.0 / baseline;
  for (auto& [img, pose] : recon_.poses) {
    const Eigen::Vector3d c = origin + s * (pose.center() - origin);
    pose = Pose::from_quaternion(pose.quaternion(), -pose.rotation() * c);
  }
  for (auto& pt : recon_.points) pt.position = origin + s * (pt.position - origin);
}

void IncrementalEngine::filter_points(const std::set<int>* only_points) {
  std::vector<ScenePoint> kept;
  kept.reserve(recon_.points.size());
  for (size_t i = 0; i < recon_.points.size(); ++i) {
    ScenePoint& pt = recon_.points[i];
    if (!only_points || only_points->count(static_cast<int>(i))) {
      std::erase_if(pt.observations, [&](const PointObservation& o) {
        return !observation_ok(recon_.poses.at(o.image), pt.position, o.pixel, recon_.images[o.image].dims,
                               policy_.max_reproj_px);
      });
      if (pt.observations.size() < 2 ||
          max_tri_angle(pt, recon_.poses) < policy_.min_tri_angle_point_deg * kDeg) {
        rejected_tracks_.insert(pt.track_id);
        continue;
      }
    }
    kept.push_back(std::move(pt));
  }
  recon_.points = std::move(kept);
  rebuild_track_index();
}

void IncrementalEngine::bundle_adjust(BaKind kind) {
  BaEvent event;
  event.kind = kind;
  event.registered = static_cast<int>(recon_.poses.size());
  event.points = static_cast<int>(recon_.points.size());
  event.images_since_global = images_since_global_;
  event.points_since_global = points_since_global_;
  event.registered_at_last_global = registered_at_last_global_;
  event.points_at_last_global = points_at_last_global_;

  std::set<int> free_images;
  std::set<int> selected_points;
  if (kind == BaKind::Local) {
    const int n = static_cast<int>(registration_order_.size());
    for (int k = std::max(0, n - policy_.local_ba_window); k < n; ++k) free_images.insert(registration_order_[k]);
    for (size_t i = 0; i < recon_.points.size(); ++i) {
      for (const auto& o : recon_.points[i].observations) {
        if (free_images.count(o.image)) {
          selected_points.insert(static_cast<int>(i));
          break;
        }
      }
    }
  } else {
    for (const auto& [img, pose] : recon_.poses) free_images.insert(img);
    for (size_t i = 0; i < recon_.points.size(); ++i) selected_points.insert(static_cast<int>(i));
  }

  BaProblem problem;
  std::map<int, int> camera_index;
  std::vector<int> point_ids(selected_points.begin(), selected_points.end());
  for (int pid : point_ids) {
    for (const auto& o : recon_.points[pid].observations) {
      if (camera_index.count(o.image)) continue;
      camera_index[o.image] = 0;
    }
  }
  for (int img : free_images) camera_index[img] = 0;
  int next = 0;
  for (auto& [img, idx] : camera_index) {
    idx = next++;
    BaCamera cam;
    cam.pose = recon_.poses.at(img);
    cam.fixed = !free_images.count(img) || img == seed_a_;
    if (img == seed_b_) {
      int axis = 0;
      cam.pose.translation().cwiseAbs().maxCoeff(&axis);
      cam.fixed_translation[axis] = true;
    }
    problem.cameras.push_back(cam);
  }
  std::vector<int> cam_obs(problem.cameras.size(), 0);
  for (size_t k = 0; k < point_ids.size(); ++k) {
    const ScenePoint& pt = recon_.points[point_ids[k]];
    problem.points.push_back({pt.position, false});
    for (const auto& o : pt.observations) {
      const int c = camera_index.at(o.image);
      problem.observations.push_back({c, static_cast<int>(k), o.pixel, recon_.images[o.image].dims});
      ++cam_obs[c];
    }
  }
  for (size_t c = 0; c < problem.cameras.size(); ++c) {
    if (cam_obs[c] == 0) problem.cameras[c].fixed = true;
  }

  if (!problem.observations.empty()) {
    solve(problem, policy_.ba);
    for (const auto& [img, idx] : camera_index) recon_.poses[img] = problem.cameras[idx].pose;
    for (size_t k = 0; k < point_ids.size(); ++k) recon_.points[point_ids[k]].position = problem.points[k].position;
  }
  normalize_scale();
  filter_points(kind == BaKind::Local ? &selected_points : nullptr);

  if (kind != BaKind::Local) {
    images_since_global_ = 0;
    points_since_global_ = 0;
    registered_at_last_global_ = static_cast<int>(recon_.poses.size());
    points_at_last_global_ = static_cast<int>(recon_.points.size());
  }
  event.mean_reprojection_px = recon_.reprojection_stats().first;
  if (log_) log_->ba_events.push_back(event);
}

void IncrementalEngine::run() {
  const SeedResult seed = select_seed_pair();
  initialize(seed);
  if (log_) log_->registered_counts.push_back(static_cast<int>(recon_.poses.size()));
  while (recon_.poses.size() < graph_.images.size()) {
    NextBest nb;
    try {
      nb = next_best_image();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NoCandidate) break;
      throw;
    }
    if (register_image(nb.image)) {
      const double registered = static_cast<double>(recon_.poses.size());
      const double points = static_cast<double>(recon_.points.size());
      const bool global = images_since_global_ > policy_.global_ba_growth * registered ||
                          points_since_global_ > policy_.global_ba_growth * points;
      bundle_adjust(global ? BaKind::Global : BaKind::Local);
    }
    if (log_) log_->registered_counts.push_back(static_cast<int>(recon_.poses.size()));
  }
  bundle_adjust(BaKind::Final);
}

Reconstruction run_sfm(const MatchGraph& graph, const EnginePolicy& policy, EngineLog* log) {
  IncrementalEngine engine(graph, policy, log);
  engine.run();
  return engine.reconstruction();
}

}  // namespace sphsfm
