#pragma once

#include <cmath>
#include <random>

#include <Eigen/Core>

#include "pvo/geometry.hpp"

namespace pvo::test {

inline Vector3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector3 v(g(rng), g(rng), g(rng));
  return v.normalized();
}

/// Twist with translation up to `t_max` mm per axis and rotation angle below `angle_max`.
inline Vector6 random_twist(std::mt19937_64& rng, double t_max = 500.0, double angle_max = 3.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> a(0.0, angle_max);
  Vector6 v;
  v << t_max * u(rng), t_max * u(rng), t_max * u(rng), Vector3::Zero();
  v.tail<3>() = a(rng) * random_unit(rng);
  return v;
}

inline PoseSE3 random_pose(std::mt19937_64& rng, double t_max = 500.0, double angle_max = 3.0) {
  return se3_exp(random_twist(rng, t_max, angle_max));
}

/// Largest |a_ij - b_ij| / max(|b_ij|, floor).
inline double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-12) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(std::abs(b(i, j)), floor));
  return worst;
}

/// Covariance comparison: diagonal entries relative to themselves, off-diagonal
/// entries relative to sqrt(b_ii b_jj).
inline double covariance_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double scale = std::sqrt(std::abs(b(i, i) * b(j, j)));
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(scale, 1e-300));
    }
  return worst;
}

}  // namespace pvo::test
