#include "pvo/association.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <tuple>

#include "pvo/features.hpp"

namespace pvo {
namespace {

struct Candidate {
  double distance;
  std::size_t curr;
  std::size_t prev;

  bool operator<(const Candidate& o) const {
    return std::tie(distance, curr, prev) < std::tie(o.distance, o.curr, o.prev);
  }
};

// Accepts candidates in ascending order while both sides are still free.
std::vector<Candidate> resolve_one_to_one(std::vector<Candidate> candidates, std::size_t n_prev,
                                          std::size_t n_curr) {
  std::sort(candidates.begin(), candidates.end());
  std::vector<char> prev_used(n_prev, 0), curr_used(n_curr, 0);
  std::vector<Candidate> accepted;
  for (const auto& c : candidates) {
    if (prev_used[c.prev] || curr_used[c.curr]) continue;
    prev_used[c.prev] = curr_used[c.curr] = 1;
    accepted.push_back(c);
  }
  std::sort(accepted.begin(), accepted.end(),
            [](const Candidate& a, const Candidate& b) { return a.curr < b.curr; });
  return accepted;
}

}  // namespace

std::vector<PointMatch> match_points(const Frame& prev, const Frame& curr, const MatchConfig& config) {
  if (prev.points.empty() || curr.points.empty()) return {};
  const std::size_t len = prev.points.front().descriptor.size();
  for (const auto* f : {&prev, &curr})
    for (const auto& p : f->points)
      if (p.descriptor.size() != len) throw std::invalid_argument("descriptor lengths differ");

  const std::size_t k = static_cast<std::size_t>(std::max(config.k, 1));
  const double r2 = config.radius_px * config.radius_px;
  std::vector<Candidate> candidates;
  std::vector<std::pair<double, std::size_t>> dists(prev.points.size());
  for (std::size_t c = 0; c < curr.points.size(); ++c) {
    const auto& q = curr.points[c];
    for (std::size_t p = 0; p < prev.points.size(); ++p)
      dists[p] = {descriptor_distance(q.descriptor, prev.points[p].descriptor), p};
    const std::size_t kk = std::min(k, dists.size());
    std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(kk), dists.end());
    for (std::size_t j = 0; j < kk; ++j) {
      const auto [dist, p] = dists[j];
      if (dist > config.max_descriptor_distance) break;
      if ((prev.points[p].pixel - q.pixel).squaredNorm() > r2) continue;
      candidates.push_back({dist, c, p});
    }
  }

  std::vector<PointMatch> out;
  for (const auto& c : resolve_one_to_one(std::move(candidates), prev.points.size(), curr.points.size()))
    out.push_back({prev.points[c.prev], curr.points[c.curr], c.distance, c.prev, c.curr});
  return out;
}

double projection_overlap(const Bitmask& a, const Bitmask& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mask sizes differ");
  const std::size_t na = a.count();
  const std::size_t nb = b.count();
  if (na == 0 || nb == 0) throw std::invalid_argument("empty mask");
  return static_cast<double>(a.and_count(b)) / static_cast<double>(std::min(na, nb));
}

double plane_to_plane_distance(const PlaneHessian& a, const PlaneHessian& b) {
  return (b.d * b.normal - a.d * a.normal).norm();
}

double normal_angle_deg(const PlaneHessian& a, const PlaneHessian& b) {
  const double c = std::clamp(a.normal.normalized().dot(b.normal.normalized()), -1.0, 1.0);
  // atan2 form stays accurate for nearly parallel normals.
  const double s = a.normal.normalized().cross(b.normal.normalized()).norm();
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

std::vector<PlaneMatch> match_planes(const Frame& prev, const Frame& curr, const MatchConfig& config) {
  std::vector<Candidate> candidates;
  for (std::size_t c = 0; c < curr.planes.size(); ++c) {
    const auto& pc = curr.planes[c];
    std::optional<Candidate> best;
    for (std::size_t p = 0; p < prev.planes.size(); ++p) {
      const auto& pp = prev.planes[p];
      if (projection_overlap(pp.inlier_mask, pc.inlier_mask) < config.min_overlap) continue;
      if (!(normal_angle_deg(pp, pc) < config.max_angle_deg)) continue;
      if (!(std::abs(pp.d - pc.d) < config.max_d_difference_mm)) continue;
      const Candidate cand{plane_to_plane_distance(pp, pc), c, p};
      if (!best || cand < *best) best = cand;
    }
    if (best) candidates.push_back(*best);
  }

  std::vector<PlaneMatch> out;
  for (const auto& c : resolve_one_to_one(std::move(candidates), prev.planes.size(), curr.planes.size())) {
    const auto& pp = prev.planes[c.prev];
    const auto& pc = curr.planes[c.curr];
    out.push_back({pp, pc, projection_overlap(pp.inlier_mask, pc.inlier_mask), c.distance, c.prev, c.curr});
  }
  return out;
}

}  // namespace pvo
