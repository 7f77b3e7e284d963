#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pvo/backprojection.hpp"
#include "pvo/geometry.hpp"

namespace pvo {

struct PlaneExtractionConfig {
  // Segmentation (cell-based region growing on the organized cloud).
  int cell_size = 20;
  double cell_min_valid_fraction = 0.5;
  double merge_angle_deg = 5.0;
  double merge_distance_mm = 20.0;
  double segment_rms_threshold_mm = 20.0;
  std::size_t min_segment_size = 900;

  // RANSAC inlier filtering.
  double inlier_threshold_mm = 15.0;
  double min_inlier_fraction = 0.6;
  int ransac_max_iterations = 200;
  double ransac_confidence = 0.99;
  std::uint64_t ransac_seed = 7;
  /// Consensus points are refined by a robust gate on their distance to the
  /// plane, studentized by each point's own covariance along the normal.
  double refine_gate_sigmas = 3.0;
  int refine_max_iterations = 10;

  // Weighted least-squares fit.
  std::size_t max_fit_points = 2000;
  /// Length unit (in mm) in which the fit is carried out: the reported
  /// covariance is A^-1 with A built from w_i = sigma_Z^-2 in this unit.
  double fit_length_unit_mm = 1000.0;
  /// |theta_m| cap in mm^-1; larger values mean the plane nearly passes
  /// through the camera centre.
  double max_theta_norm = 1.0;
};

/// Candidate plane region: member pixel indices plus the same set as a mask.
struct PlaneSegment {
  std::vector<std::size_t> pixels;
  Bitmask inlier_mask;
};

class PlaneFitError : public std::runtime_error {
 public:
  enum class Reason { too_few_points, invalid_depth, singular, near_origin };
  PlaneFitError(Reason reason, const char* what) : std::runtime_error(what), reason_(reason) {}
  Reason reason() const { return reason_; }

 private:
  Reason reason_;
};

std::vector<PlaneSegment> segment_planes(const OrganizedCloud& cloud,
                                         const PlaneExtractionConfig& config = {});

/// Keeps the consensus set of the best 3-point plane (within
/// inlier_threshold_mm). Returns nullopt when the consensus is below
/// min_inlier_fraction of the segment. Throws std::invalid_argument for
/// segments with fewer than 3 points.
std::optional<PlaneSegment> ransac_filter(const PlaneSegment& segment, const OrganizedCloud& cloud,
                                          const PlaneExtractionConfig& config = {});

/// Weighted least-squares plane fit, w_i = 1 / sigma_Z^2 taken from each
/// point's covariance (its Z-Z entry). Solves A theta_m = b; the covariance is
/// A^-1 expressed for lengths in `length_unit_mm`, returned in mm^-2.
PlaneMinimal fit_plane_wls(std::span<const Point3WithCov> points, double length_unit_mm = 1000.0,
                           double max_theta_norm = 1.0);

/// The normal equations used by fit_plane_wls, in mm.
struct WlsSystem {
  Matrix3 a = Matrix3::Zero();
  Vector3 b = Vector3::Zero();
};
WlsSystem wls_normal_equations(std::span<const Point3WithCov> points);

/// Hessian form with d < 0: N = -theta/|theta|, d = -1/|theta|.
PlaneHessian to_hessian(const PlaneMinimal& plane);

/// d(N, d)/d(theta_m) for the map used by to_hessian.
Eigen::Matrix<double, 4, 3> to_hessian_jacobian(const Vector3& theta_m);

/// Unweighted total-least-squares plane through `points` (normal oriented
/// with d < 0) and its RMS distance.
struct PlaneFitSummary {
  Vector3 normal = Vector3::UnitZ();
  double d = 0.0;
  double rms = 0.0;
};
PlaneFitSummary fit_plane_pca(std::span<const Vector3> points);

/// Full per-frame chain: segment, RANSAC filter, subsample, WLS fit, Hessian
/// form with the inlier mask attached. Segments whose fit fails are dropped.
std::vector<PlaneHessian> extract_planes(const OrganizedCloud& cloud,
                                         const PlaneExtractionConfig& config = {});

}  // namespace pvo
