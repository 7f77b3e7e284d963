#pragma once

#include <cstddef>
#include <vector>

#include "pvo/frame.hpp"
#include "pvo/geometry.hpp"

namespace pvo {

struct MatchConfig {
  /// Number of nearest previous descriptors considered per current keypoint.
  int k = 4;
  double radius_px = 60.0;
  /// Descriptor (L2) distance above which a candidate is ignored.
  double max_descriptor_distance = 1.0;

  double min_overlap = 0.5;
  double max_angle_deg = 10.0;
  double max_d_difference_mm = 100.0;
};

struct PointMatch {
  Point3WithCov prev;
  Point3WithCov curr;
  double descriptor_distance = 0.0;
  std::size_t prev_index = 0;
  std::size_t curr_index = 0;
};

struct PlaneMatch {
  PlaneHessian prev;
  PlaneHessian curr;
  double overlap_fraction = 0.0;
  double plane_distance = 0.0;
  std::size_t prev_index = 0;
  std::size_t curr_index = 0;
};

/// k-NN descriptor search with a pixel gate, resolved one-to-one greedily in
/// ascending descriptor distance.
std::vector<PointMatch> match_points(const Frame& prev, const Frame& curr, const MatchConfig& config = {});

/// popcount(a AND b) / min(popcount(a), popcount(b)). Throws
/// std::invalid_argument for empty or differently sized masks.
double projection_overlap(const Bitmask& a, const Bitmask& b);

/// |d_b N_b - d_a N_a| in mm.
double plane_to_plane_distance(const PlaneHessian& a, const PlaneHessian& b);

/// Angle between plane normals in degrees.
double normal_angle_deg(const PlaneHessian& a, const PlaneHessian& b);

std::vector<PlaneMatch> match_planes(const Frame& prev, const Frame& curr, const MatchConfig& config = {});

}  // namespace pvo
