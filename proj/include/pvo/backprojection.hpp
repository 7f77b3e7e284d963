#pragma once

#include <optional>
#include <vector>

#include "pvo/geometry.hpp"

namespace pvo {

/// Structured-light depth noise: sigma_Z = depth_sigma_coeff * Z^2 (mm), plus
/// isotropic pixel quantization noise sigma_p.
struct NoiseModel {
  double sigma_p = 0.5;
  double depth_sigma_coeff = 1.425e-6;
  /// Working range; depths outside it are treated as missing.
  double min_depth_mm = 300.0;
  double max_depth_mm = 10000.0;

  void validate() const;
};

/// Raw depth grid, row-major. A raw value of 0 means "no measurement".
struct DepthImage {
  int rows = 0;
  int cols = 0;
  std::vector<double> raw;
  CameraIntrinsics intrinsics;
  double timestamp = 0.0;

  DepthImage() = default;
  DepthImage(int rows, int cols, const CameraIntrinsics& intrinsics, double timestamp = 0.0);

  double& at(int row, int col) { return raw[static_cast<std::size_t>(row) * cols + col]; }
  double at(int row, int col) const { return raw[static_cast<std::size_t>(row) * cols + col]; }

  /// Depth in mm, or nullopt when missing or outside the model's working range.
  std::optional<double> depth_mm(int row, int col, const NoiseModel& model) const;
};

double depth_sigma(double z, const NoiseModel& model);

/// Pinhole back-projection of pixel (u, v) at depth Z (mm). Throws
/// std::invalid_argument for Z <= 0.
Vector3 backproject(const Vector2& pixel, double z, const CameraIntrinsics& intrinsics);

/// Jacobian of backproject with respect to (u, v, Z).
Matrix3 backprojection_jacobian(const Vector2& pixel, double z, const CameraIntrinsics& intrinsics);

/// Back-projection with first-order covariance J diag(sp^2, sp^2, sZ^2) J^T.
Point3WithCov backproject_with_cov(const Vector2& pixel, double z, const CameraIntrinsics& intrinsics,
                                   const NoiseModel& model);

/// Point cloud laid out on the image grid. Covariances are derived on demand
/// from the stored pixel and depth, so the grid itself stays compact.
class OrganizedCloud {
 public:
  OrganizedCloud() = default;
  OrganizedCloud(int rows, int cols, const CameraIntrinsics& intrinsics, const NoiseModel& model);

  /// Back-projects every valid pixel of `depth`.
  static OrganizedCloud from_depth(const DepthImage& depth, const NoiseModel& model);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return positions_.size(); }
  std::size_t valid_count() const;

  bool valid(std::size_t index) const { return valid_[index] != 0; }
  const Vector3& position(std::size_t index) const { return positions_[index]; }
  Vector2 pixel(std::size_t index) const {
    return {static_cast<double>(index % cols_), static_cast<double>(index / cols_)};
  }
  Matrix3 covariance(std::size_t index) const;
  std::optional<Point3WithCov> at(std::size_t index) const;

  /// Sets the point at `index` from its depth; Z <= 0 clears it.
  void set_depth(std::size_t index, double z);

  const CameraIntrinsics& intrinsics() const { return intrinsics_; }
  const NoiseModel& noise() const { return noise_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  CameraIntrinsics intrinsics_;
  NoiseModel noise_;
  std::vector<Vector3> positions_;
  std::vector<unsigned char> valid_;
};

}  // namespace pvo
