#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace pvo {

using Vector2 = Eigen::Vector2d;
using Vector3 = Eigen::Vector3d;
using Vector4 = Eigen::Vector4d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;
using Matrix4 = Eigen::Matrix4d;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Pinhole intrinsics of the (registered) RGB-D camera. Lengths in pixels.
struct CameraIntrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;
  /// Raw depth unit to millimetres. TUM PNGs store 5000 units per metre.
  double depth_scale = 0.2;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
};

/// Rigid transform x -> R x + t, translation in millimetres.
/// The optional covariance is over the twist (rho, omega), see se3_exp.
struct PoseSE3 {
  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();
  std::optional<Matrix6> covariance;

  static PoseSE3 identity() { return {}; }
  static PoseSE3 from(const Matrix3& r, const Vector3& t) { return {r, t, std::nullopt}; }

  Matrix4 matrix() const;
  PoseSE3 inverse() const;
  /// Composition (*this) o other, i.e. apply `other` first.
  PoseSE3 operator*(const PoseSE3& other) const;
};

/// Back-projected point with its propagated 3x3 covariance (mm, mm^2).
struct Point3WithCov {
  Vector3 position = Vector3::Zero();
  Matrix3 covariance = Matrix3::Zero();
  Vector2 pixel = Vector2::Zero();
  std::vector<float> descriptor;
  /// Ground-truth identity for synthetic features, -1 otherwise.
  std::int64_t id = -1;
};

/// Fixed-length bit set over image pixels (row-major).
class Bitmask {
 public:
  Bitmask() = default;
  explicit Bitmask(std::size_t bits);

  std::size_t size() const { return bits_; }
  void set(std::size_t i, bool value = true);
  bool test(std::size_t i) const;
  std::size_t count() const;
  /// popcount(a AND b); sizes must match.
  std::size_t and_count(const Bitmask& other) const;

  const std::vector<std::uint64_t>& words() const { return words_; }

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Minimal plane parameterization theta_m = N / d with theta_m . P + 1 = 0.
/// Units: mm^-1, covariance mm^-2.
struct PlaneMinimal {
  Vector3 theta_m = Vector3::Zero();
  Matrix3 covariance = Matrix3::Zero();
  std::size_t inlier_count = 0;
};

/// Hessian normal form N . P + d = 0 with |N| = 1.
///
/// Orientation convention: d < 0, i.e. the normal points away from the camera
/// that observed the plane (N . P = -d > 0 for points on it). The covariance is
/// over (N_x, N_y, N_z, d).
struct PlaneHessian {
  Vector3 normal = Vector3::UnitZ();
  double d = -1.0;
  Matrix4 covariance = Matrix4::Zero();
  Bitmask inlier_mask;
  std::size_t inlier_count = 0;

  double signed_distance(const Vector3& p) const { return normal.dot(p) + d; }
};

Matrix3 skew(const Vector3& v);

Vector3 se3_apply(const PoseSE3& pose, const Vector3& point);

/// Exponential map of the twist (rho, omega): translation part first,
/// rotation as axis-angle.
PoseSE3 se3_exp(const Vector6& twist);

/// Inverse of se3_exp. Throws std::domain_error when the rotation angle is
/// within 1e-9 of pi, where the axis is ambiguous.
Vector6 se3_log(const PoseSE3& pose);

Matrix3 so3_exp(const Vector3& omega);
Vector3 so3_log(const Matrix3& rotation);

/// Rigid transform of a plane so that plane membership is preserved:
/// N' = R N, d' = d - t . (R N). The covariance is propagated for the plane
/// parameters only (the pose is treated as exact).
PlaneHessian transform_plane(const PoseSE3& pose, const PlaneHessian& plane);

/// Rotation angle of R in radians, in [0, pi].
double rotation_angle(const Matrix3& rotation);

/// Eigenvalue-based PSD check: min eigenvalue >= -tol * max(trace, 1).
bool is_symmetric_psd(const Eigen::MatrixXd& m, double tol = 1e-9);

}  // namespace pvo
