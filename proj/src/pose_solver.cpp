#include "pvo/pose_solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace pvo {
namespace {

using Jacobian36 = Eigen::Matrix<double, 3, 6>;

Vector3 clamp_inverse(const Matrix3& cov, const SolverConfig& config) {
  Vector3 w;
  for (int k = 0; k < 3; ++k) {
    const double var = cov(k, k);
    w(k) = var > 0.0 ? std::clamp(1.0 / var, config.w_min, config.w_max) : config.w_max;
  }
  return w;
}

// Residual covariance of the closest-to-origin point d N from a (N, d) covariance.
Matrix3 closest_point_covariance(const PlaneHessian& plane) {
  Eigen::Matrix<double, 3, 4> j;
  j.leftCols<3>() = plane.d * Matrix3::Identity();
  j.col(3) = plane.normal;
  return j * plane.covariance * j.transpose();
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

struct Problem {
  const std::vector<PointMatch>& points;
  const std::vector<PlaneMatch>& planes;
  const SolverConfig& config;
  bool use_planes;

  std::vector<Vector3> point_w;
  std::vector<Vector3> plane_w;

  void reweight(const PoseSE3& pose) {
    point_w.assign(points.size(), Vector3::Ones());
    plane_w.assign(planes.size(), Vector3::Ones());
    const bool prob = config.weighting == Weighting::probabilistic;
    if (prob) {
      for (std::size_t i = 0; i < points.size(); ++i) point_w[i] = residual_weights(pose, points[i], config).weights;
      if (use_planes)
        for (std::size_t j = 0; j < planes.size(); ++j) plane_w[j] = residual_weights(pose, planes[j], config).weights;
    }
    if (config.robust_points && !points.empty()) {
      std::vector<double> e(points.size());
      for (std::size_t i = 0; i < points.size(); ++i) {
        const Vector3 r = point_residual(pose, points[i]);
        e[i] = std::sqrt(r.cwiseProduct(r).dot(point_w[i]));
      }
      // MAD about zero: residuals are centred by construction.
      const double scale = 1.4826 * median(e);
      if (scale > 1e-12)
        for (std::size_t i = 0; i < points.size(); ++i) point_w[i] *= tukey_weight(e[i] / scale, config.tukey_c);
    }
    for (auto& w : plane_w) w *= config.alpha;
  }

  double cost(const PoseSE3& pose) const {
    double c = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vector3 r = point_residual(pose, points[i]);
      c += r.cwiseProduct(r).dot(point_w[i]);
    }
    if (use_planes)
      for (std::size_t j = 0; j < planes.size(); ++j) {
        const Vector3 r = plane_residual(pose, planes[j]);
        c += r.cwiseProduct(r).dot(plane_w[j]);
      }
    return c;
  }

  // Returns false on non-finite residuals or Jacobians.
  bool linearize(const PoseSE3& pose, Matrix6& h, Vector6& g, double& c) const {
    h.setZero();
    g.setZero();
    c = 0.0;
    auto add = [&](const Vector3& r, const Jacobian36& j, const Vector3& w) {
      if (!r.allFinite() || !j.allFinite()) return false;
      h.noalias() += j.transpose() * w.asDiagonal() * j;
      g.noalias() += j.transpose() * w.asDiagonal() * r;
      c += r.cwiseProduct(r).dot(w);
      return true;
    };
    for (std::size_t i = 0; i < points.size(); ++i)
      if (!add(point_residual(pose, points[i]), point_residual_jacobian(pose, points[i]), point_w[i])) return false;
    if (use_planes)
      for (std::size_t j = 0; j < planes.size(); ++j)
        if (!add(plane_residual(pose, planes[j]), plane_residual_jacobian(pose, planes[j]), plane_w[j]))
          return false;
    return std::isfinite(c);
  }
};

}  // namespace

void SolverConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be >= 0");
  if (!(velocity_decay >= 0.0 && velocity_decay <= 1.0))
    throw std::invalid_argument("velocity_decay must lie in [0, 1]");
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (!(tukey_c > 0.0)) throw std::invalid_argument("tukey_c must be > 0");
  if (!(w_min > 0.0 && w_max >= w_min)) throw std::invalid_argument("invalid weight clamps");
  if (!(lm_lambda_init > 0.0 && lm_lambda_factor > 1.0)) throw std::invalid_argument("invalid LM damping");
}

std::string to_string(Fallback fallback) {
  switch (fallback) {
    case Fallback::none: return "none";
    case Fallback::decayed_velocity_few_matches: return "decayed_velocity_few_matches";
    case Fallback::decayed_velocity_covariance_gate: return "decayed_velocity_covariance_gate";
    case Fallback::decayed_velocity_non_finite: return "decayed_velocity_non_finite";
  }
  return "unknown";
}

Vector3 point_residual(const PoseSE3& pose, const PointMatch& match) {
  return match.curr.position - se3_apply(pose, match.prev.position);
}

Vector3 plane_residual(const PoseSE3& pose, const PlaneMatch& match) {
  const Vector3 rn = pose.rotation * match.prev.normal;
  const double dt = match.prev.d - pose.translation.dot(rn);
  return match.curr.d * match.curr.normal - dt * rn;
}

Jacobian36 point_residual_jacobian(const PoseSE3& pose, const PointMatch& match) {
  Jacobian36 j;
  j.leftCols<3>() = -Matrix3::Identity();
  j.rightCols<3>() = skew(se3_apply(pose, match.prev.position));
  return j;
}

Jacobian36 plane_residual_jacobian(const PoseSE3& pose, const PlaneMatch& match) {
  const Vector3 rn = pose.rotation * match.prev.normal;
  const double dt = match.prev.d - pose.translation.dot(rn);
  Jacobian36 j;
  j.leftCols<3>() = rn * rn.transpose();
  j.rightCols<3>() = dt * skew(rn);
  return j;
}

ResidualWeights residual_weights(const PoseSE3& pose, const PointMatch& match, const SolverConfig& config) {
  ResidualWeights out;
  out.covariance = match.curr.covariance + pose.rotation * match.prev.covariance * pose.rotation.transpose();
  if (config.include_pose_covariance && pose.covariance) {
    const Jacobian36 j = point_residual_jacobian(pose, match);
    out.covariance += j * (*pose.covariance) * j.transpose();
  }
  out.weights = clamp_inverse(out.covariance, config);
  return out;
}

ResidualWeights residual_weights(const PoseSE3& pose, const PlaneMatch& match, const SolverConfig& config) {
  ResidualWeights out;
  const PlaneHessian moved = transform_plane(pose, match.prev);
  out.covariance = closest_point_covariance(match.curr) + closest_point_covariance(moved);
  if (config.include_pose_covariance && pose.covariance) {
    const Jacobian36 j = plane_residual_jacobian(pose, match);
    out.covariance += j * (*pose.covariance) * j.transpose();
  }
  out.weights = clamp_inverse(out.covariance, config);
  return out;
}

double tukey_weight(double u, double c) {
  const double a = std::abs(u) / c;
  if (a >= 1.0) return 0.0;
  const double b = 1.0 - a * a;
  return b * b;
}

PoseSE3 decayed_velocity(const Vector6& prev_twist, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw std::invalid_argument("decay must lie in [0, 1]");
  return se3_exp(decay * prev_twist);
}

SolverReport solve_pose(const std::vector<PointMatch>& point_matches, const std::vector<PlaneMatch>& plane_matches,
                        const Vector6& prior_velocity, const SolverConfig& config) {
  config.validate();
  SolverReport report;
  report.point_match_count = point_matches.size();
  report.plane_match_count = plane_matches.size();
  const PoseSE3 prior = decayed_velocity(prior_velocity, config.velocity_decay);
  report.pose = prior;

  if (static_cast<int>(point_matches.size() + plane_matches.size()) < config.min_total_matches) {
    report.fallback_used = Fallback::decayed_velocity_few_matches;
    return report;
  }

  Problem problem{point_matches, plane_matches, config, config.alpha > 0.0, {}, {}};
  PoseSE3 pose = prior;
  double lambda = config.lm_lambda_init;
  std::optional<Matrix6> pose_cov;
  bool first = true;

  auto fail_non_finite = [&] {
    report.pose = prior;
    report.covariance.reset();
    report.fallback_used = Fallback::decayed_velocity_non_finite;
    return report;
  };

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    report.iterations = iter + 1;
    pose.covariance = config.include_pose_covariance ? pose_cov : std::nullopt;
    problem.reweight(pose);
    Matrix6 h;
    Vector6 g;
    double cost;
    if (!problem.linearize(pose, h, g, cost)) return fail_non_finite();
    if (first) {
      report.initial_cost = cost;
      first = false;
    }
    if (config.include_pose_covariance) {
      Eigen::LDLT<Matrix6> ldlt(h);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) pose_cov = ldlt.solve(Matrix6::Identity());
    }

    bool accepted = false;
    Vector6 delta = Vector6::Zero();
    for (int attempt = 0; attempt < 30; ++attempt) {
      Matrix6 damped = h;
      for (int k = 0; k < 6; ++k) damped(k, k) += lambda * std::max(h(k, k), 1e-12);
      delta = -damped.ldlt().solve(g);
      if (!delta.allFinite()) {
        lambda *= config.lm_lambda_factor;
        continue;
      }
      PoseSE3 candidate = se3_exp(delta) * pose;
      const double new_cost = problem.cost(candidate);
      if (!std::isfinite(new_cost)) return fail_non_finite();
      if (new_cost < cost) {
        report.accepted_steps.emplace_back(cost, new_cost);
        pose = candidate;
        lambda = std::max(lambda / config.lm_lambda_factor, 1e-12);
        accepted = true;
        break;
      }
      lambda *= config.lm_lambda_factor;
    }
    report.iterates.push_back(se3_log(pose));
    if (!accepted) {
      // No step reduces the cost any further: a stationary point.
      report.converged = true;
      break;
    }
    if (delta.head<3>().norm() < config.step_tolerance_mm && delta.tail<3>().norm() < config.step_tolerance_rad) {
      report.converged = true;
      break;
    }
  }

  pose.covariance = config.include_pose_covariance ? pose_cov : std::nullopt;
  problem.reweight(pose);
  Matrix6 h;
  Vector6 g;
  double cost;
  if (!problem.linearize(pose, h, g, cost)) return fail_non_finite();
  report.final_cost = cost;

  const Matrix6 hs = 0.5 * (h + h.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix6> es(hs);
  const double min_eig = es.eigenvalues().minCoeff();
  pose.covariance.reset();
  if (min_eig > 0.0 && std::isfinite(min_eig)) {
    Matrix6 cov = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    report.covariance = 0.5 * (cov + cov.transpose());
  }
  if (!report.covariance || !(1.0 / min_eig <= config.pose_cov_eigen_max)) {
    report.pose = prior;
    report.fallback_used = Fallback::decayed_velocity_covariance_gate;
    return report;
  }
  pose.covariance = report.covariance;
  report.pose = pose;
  return report;
}

}  // namespace pvo
