#include "pvo/backprojection.hpp"

#include <algorithm>
#include <stdexcept>

namespace pvo {

void NoiseModel::validate() const {
  if (!(sigma_p > 0.0)) throw std::invalid_argument("sigma_p must be positive");
  if (!(depth_sigma_coeff > 0.0)) throw std::invalid_argument("depth_sigma_coeff must be positive");
  if (!(min_depth_mm >= 0.0 && max_depth_mm > min_depth_mm))
    throw std::invalid_argument("invalid depth working range");
}

DepthImage::DepthImage(int rows_, int cols_, const CameraIntrinsics& intrinsics_, double timestamp_)
    : rows(rows_),
      cols(cols_),
      raw(static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_), 0.0),
      intrinsics(intrinsics_),
      timestamp(timestamp_) {}

std::optional<double> DepthImage::depth_mm(int row, int col, const NoiseModel& model) const {
  const double r = at(row, col);
  if (r <= 0.0) return std::nullopt;
  const double z = r * intrinsics.depth_scale;
  if (z < model.min_depth_mm || z > model.max_depth_mm) return std::nullopt;
  return z;
}

double depth_sigma(double z, const NoiseModel& model) { return model.depth_sigma_coeff * z * z; }

Vector3 backproject(const Vector2& pixel, double z, const CameraIntrinsics& k) {
  if (!(z > 0.0)) throw std::invalid_argument("backproject: depth must be positive");
  return {z * (pixel.x() - k.cx) / k.fx, z * (pixel.y() - k.cy) / k.fy, z};
}

Matrix3 backprojection_jacobian(const Vector2& pixel, double z, const CameraIntrinsics& k) {
  Matrix3 j;
  j << z / k.fx, 0.0, (pixel.x() - k.cx) / k.fx,
       0.0, z / k.fy, (pixel.y() - k.cy) / k.fy,
       0.0, 0.0, 1.0;
  return j;
}

Point3WithCov backproject_with_cov(const Vector2& pixel, double z, const CameraIntrinsics& k,
                                   const NoiseModel& model) {
  Point3WithCov p;
  p.position = backproject(pixel, z, k);
  p.pixel = pixel;
  const Matrix3 j = backprojection_jacobian(pixel, z, k);
  const double sp2 = model.sigma_p * model.sigma_p;
  const double sz = depth_sigma(z, model);
  const Vector3 var(sp2, sp2, sz * sz);
  p.covariance = j * var.asDiagonal() * j.transpose();
  p.covariance = 0.5 * (p.covariance + p.covariance.transpose());
  return p;
}

OrganizedCloud::OrganizedCloud(int rows, int cols, const CameraIntrinsics& intrinsics,
                               const NoiseModel& model)
    : rows_(rows),
      cols_(cols),
      intrinsics_(intrinsics),
      noise_(model),
      positions_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), Vector3::Zero()),
      valid_(positions_.size(), 0) {}

OrganizedCloud OrganizedCloud::from_depth(const DepthImage& depth, const NoiseModel& model) {
  OrganizedCloud cloud(depth.rows, depth.cols, depth.intrinsics, model);
  for (int r = 0; r < depth.rows; ++r) {
    for (int c = 0; c < depth.cols; ++c) {
      if (auto z = depth.depth_mm(r, c, model))
        cloud.set_depth(static_cast<std::size_t>(r) * depth.cols + c, *z);
    }
  }
  return cloud;
}

std::size_t OrganizedCloud::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), 1));
}

void OrganizedCloud::set_depth(std::size_t index, double z) {
  if (!(z > 0.0)) {
    valid_[index] = 0;
    positions_[index].setZero();
    return;
  }
  positions_[index] = backproject(pixel(index), z, intrinsics_);
  valid_[index] = 1;
}

Matrix3 OrganizedCloud::covariance(std::size_t index) const {
  return backproject_with_cov(pixel(index), positions_[index].z(), intrinsics_, noise_).covariance;
}

std::optional<Point3WithCov> OrganizedCloud::at(std::size_t index) const {
  if (!valid(index)) return std::nullopt;
  return backproject_with_cov(pixel(index), positions_[index].z(), intrinsics_, noise_);
}

}  // namespace pvo
