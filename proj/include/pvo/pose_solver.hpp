#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pvo/association.hpp"
#include "pvo/geometry.hpp"

namespace pvo {

enum class Weighting { probabilistic, deterministic };

struct SolverConfig {
  /// Scale of the plane term; 0 removes it.
  double alpha = 10.0;
  int max_iterations = 50;
  double tukey_c = 4.685;
  int min_total_matches = 3;
  /// Gate on the largest eigenvalue of the twist covariance (mm^2 / rad^2 mixed).
  double pose_cov_eigen_max = 1e4;
  double velocity_decay = 0.5;
  double lm_lambda_init = 1e-4;
  double lm_lambda_factor = 10.0;
  Weighting weighting = Weighting::probabilistic;
  bool robust_points = true;
  /// Adds the previous iterate's pose covariance to the residual covariance.
  bool include_pose_covariance = false;
  double w_min = 1e-12;
  double w_max = 1e6;
  /// Convergence when the twist update falls below these norms (mm, rad).
  double step_tolerance_mm = 1e-10;
  double step_tolerance_rad = 1e-13;

  void validate() const;
};

enum class Fallback {
  none,
  decayed_velocity_few_matches,
  decayed_velocity_covariance_gate,
  decayed_velocity_non_finite
};

std::string to_string(Fallback fallback);

struct SolverReport {
  PoseSE3 pose;
  bool converged = false;
  int iterations = 0;
  Fallback fallback_used = Fallback::none;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  std::size_t point_match_count = 0;
  std::size_t plane_match_count = 0;
  /// Cost before and after every accepted step, evaluated with that
  /// iteration's weights.
  std::vector<std::pair<double, double>> accepted_steps;
  /// Pose (as a twist) after every iteration.
  std::vector<Vector6> iterates;
  /// (J^T W J)^-1 at the solution, when one was computed.
  std::optional<Matrix6> covariance;
};

/// P' - (R P + t) for the pose mapping previous-frame to current-frame coordinates.
Vector3 point_residual(const PoseSE3& pose, const PointMatch& match);

/// d' N' - d_T N_T with {N_T, d_T} the previous plane moved by `pose`.
Vector3 plane_residual(const PoseSE3& pose, const PlaneMatch& match);

/// Jacobians with respect to a left perturbation exp(delta) * pose, delta = (rho, omega).
Eigen::Matrix<double, 3, 6> point_residual_jacobian(const PoseSE3& pose, const PointMatch& match);
Eigen::Matrix<double, 3, 6> plane_residual_jacobian(const PoseSE3& pose, const PlaneMatch& match);

struct ResidualWeights {
  /// First-order residual covariance.
  Matrix3 covariance = Matrix3::Zero();
  /// Inverse diagonal of `covariance`, clamped to [w_min, w_max].
  Vector3 weights = Vector3::Ones();
};

/// Residual covariance from both points' covariances (and the pose
/// covariance when include_pose_covariance is set and the pose carries one).
ResidualWeights residual_weights(const PoseSE3& pose, const PointMatch& match, const SolverConfig& config = {});
/// Same for planes, through the (N, d) covariances of both planes.
ResidualWeights residual_weights(const PoseSE3& pose, const PlaneMatch& match, const SolverConfig& config = {});

/// Tukey biweight for a standardized residual u: (1 - (u/c)^2)^2 inside c, else 0.
double tukey_weight(double u, double c);

PoseSE3 decayed_velocity(const Vector6& prev_twist, double decay);

/// Iteratively reweighted Levenberg-Marquardt over stacked point and plane
/// residuals, initialized at decayed_velocity(prior_velocity).
SolverReport solve_pose(const std::vector<PointMatch>& point_matches, const std::vector<PlaneMatch>& plane_matches,
                        const Vector6& prior_velocity, const SolverConfig& config = {});

}  // namespace pvo
