#pragma once

#include <vector>

#include "pvo/geometry.hpp"

namespace pvo {

/// What the odometry consumes per image: 3D keypoints with covariances and
/// fitted planes with their inlier masks.
struct Frame {
  double timestamp = 0.0;
  CameraIntrinsics intrinsics;
  std::vector<Point3WithCov> points;
  std::vector<PlaneHessian> planes;
};

}  // namespace pvo
