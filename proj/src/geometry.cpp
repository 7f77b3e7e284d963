#include "pvo/geometry.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace pvo {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("image size must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height))
    throw std::invalid_argument("principal point outside the image");
  if (!(depth_scale > 0.0)) throw std::invalid_argument("depth_scale must be positive");
}

Matrix4 PoseSE3::matrix() const {
  Matrix4 m = Matrix4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

PoseSE3 PoseSE3::inverse() const {
  const Matrix3 rt = rotation.transpose();
  return PoseSE3::from(rt, -(rt * translation));
}

PoseSE3 PoseSE3::operator*(const PoseSE3& other) const {
  return PoseSE3::from(rotation * other.rotation, rotation * other.translation + translation);
}

Bitmask::Bitmask(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

void Bitmask::set(std::size_t i, bool value) {
  if (i >= bits_) throw std::out_of_range("Bitmask::set");
  const std::uint64_t bit = std::uint64_t{1} << (i % 64);
  if (value)
    words_[i / 64] |= bit;
  else
    words_[i / 64] &= ~bit;
}

bool Bitmask::test(std::size_t i) const {
  if (i >= bits_) throw std::out_of_range("Bitmask::test");
  return (words_[i / 64] >> (i % 64)) & 1U;
}

std::size_t Bitmask::count() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::size_t Bitmask::and_count(const Bitmask& other) const {
  if (other.bits_ != bits_) throw std::invalid_argument("bitmask sizes differ");
  std::size_t n = 0;
  for (std::size_t i = 0; i < words_.size(); ++i)
    n += static_cast<std::size_t>(std::popcount(words_[i] & other.words_[i]));
  return n;
}

Matrix3 skew(const Vector3& v) {
  Matrix3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Vector3 se3_apply(const PoseSE3& pose, const Vector3& point) {
  return pose.rotation * point + pose.translation;
}

Matrix3 so3_exp(const Vector3& omega) {
  const double theta2 = omega.squaredNorm();
  const Matrix3 k = skew(omega);
  if (theta2 < 1e-16) return Matrix3::Identity() + k + 0.5 * k * k;
  const double theta = std::sqrt(theta2);
  const double half_sin = std::sin(0.5 * theta);
  return Matrix3::Identity() + (std::sin(theta) / theta) * k + (2.0 * half_sin * half_sin / theta2) * k * k;
}

double rotation_angle(const Matrix3& rotation) {
  const Vector3 v(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                  rotation(1, 0) - rotation(0, 1));
  return std::atan2(0.5 * v.norm(), 0.5 * (rotation.trace() - 1.0));
}

Vector3 so3_log(const Matrix3& rotation) {
  const Vector3 v = 0.5 * Vector3(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                                  rotation(1, 0) - rotation(0, 1));
  const double sin_theta = v.norm();
  const double cos_theta = 0.5 * (rotation.trace() - 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);

  if (theta > std::numbers::pi - 1e-9)
    throw std::domain_error("se3_log: rotation angle at pi has an ambiguous axis");

  if (theta < 1e-8) return v;  // sin(theta)/theta ~ 1
  if (theta < 3.0) return (theta / sin_theta) * v;

  // Near pi sin(theta) is small: recover the axis from the symmetric part
  // R = cos I + (1 - cos) a a^T + sin [a]x.
  const Matrix3 aat = (0.5 * (rotation + rotation.transpose()) - cos_theta * Matrix3::Identity()) /
                      (1.0 - cos_theta);
  Eigen::Index k = 0;
  aat.diagonal().maxCoeff(&k);
  Vector3 axis = aat.col(k) / std::sqrt(aat(k, k));
  if (axis.dot(v) < 0.0) axis = -axis;
  return theta * axis.normalized();
}

namespace {

// Left Jacobian V of SO(3), used for the translation part of exp/log. Below
// kSeriesAngle the closed forms lose digits to cancellation, so their Taylor
// series are used instead.
constexpr double kSeriesAngle = 1e-2;

Matrix3 left_jacobian(const Vector3& omega) {
  const double theta2 = omega.squaredNorm();
  const Matrix3 k = skew(omega);
  double a, b;  // (1 - cos) / theta^2, (theta - sin) / theta^3
  if (theta2 < kSeriesAngle * kSeriesAngle) {
    a = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    b = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0;
  } else {
    const double theta = std::sqrt(theta2);
    const double half_sin = std::sin(0.5 * theta);
    a = 2.0 * half_sin * half_sin / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Matrix3::Identity() + a * k + b * k * k;
}

Matrix3 left_jacobian_inverse(const Vector3& omega) {
  const double theta2 = omega.squaredNorm();
  const Matrix3 k = skew(omega);
  double c;  // (1 - (theta/2) cot(theta/2)) / theta^2
  if (theta2 < kSeriesAngle * kSeriesAngle) {
    c = 1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0;
  } else {
    const double theta = std::sqrt(theta2);
    const double half = 0.5 * theta;
    c = (1.0 - half * std::cos(half) / std::sin(half)) / theta2;
  }
  return Matrix3::Identity() - 0.5 * k + c * k * k;
}

}  // namespace

PoseSE3 se3_exp(const Vector6& twist) {
  const Vector3 rho = twist.head<3>();
  const Vector3 omega = twist.tail<3>();
  return PoseSE3::from(so3_exp(omega), left_jacobian(omega) * rho);
}

Vector6 se3_log(const PoseSE3& pose) {
  const Vector3 omega = so3_log(pose.rotation);
  Vector6 out;
  out.head<3>() = left_jacobian_inverse(omega) * pose.translation;
  out.tail<3>() = omega;
  return out;
}

PlaneHessian transform_plane(const PoseSE3& pose, const PlaneHessian& plane) {
  PlaneHessian out = plane;
  const Vector3 rn = pose.rotation * plane.normal;
  out.normal = rn;
  out.d = plane.d - pose.translation.dot(rn);

  // d(N', d')/d(N, d)
  Matrix4 j = Matrix4::Zero();
  j.topLeftCorner<3, 3>() = pose.rotation;
  j.block<1, 3>(3, 0) = -(pose.translation.transpose() * pose.rotation);
  j(3, 3) = 1.0;
  out.covariance = j * plane.covariance * j.transpose();
  return out;
}

bool is_symmetric_psd(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(m.cwiseAbs().maxCoeff(), std::abs(m.trace()));
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * std::max(scale, 1e-300)) return false;
  if (scale == 0.0) return true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()),
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * scale;
}

}  // namespace pvo
