#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "pvo/backprojection.hpp"
#include "pvo/geometry.hpp"

namespace pvo {

/// Rectangle origin + s*axis_u + t*axis_v, s in [0, extent_u], t in [0, extent_v].
/// Axes are orthonormal; all lengths in mm, world frame.
struct BoundedPlane {
  int id = 0;
  Vector3 origin = Vector3::Zero();
  Vector3 axis_u = Vector3::UnitX();
  Vector3 axis_v = Vector3::UnitY();
  double extent_u = 1000.0;
  double extent_v = 1000.0;

  Vector3 normal() const { return axis_u.cross(axis_v); }
};

struct Landmark {
  std::int64_t id = 0;
  Vector3 position = Vector3::Zero();
};

/// Camera-to-world pose at a timestamp (seconds).
struct TimedPose {
  double timestamp = 0.0;
  PoseSE3 pose;
};

struct SyntheticScene {
  std::string name;
  std::vector<BoundedPlane> planes;
  std::vector<Landmark> landmarks;
  std::vector<TimedPose> trajectory;
  CameraIntrinsics intrinsics{525.0, 525.0, 319.5, 239.5, 640, 480, 1.0};
  NoiseModel noise;
  bool noise_enabled = true;
};

struct TrajectoryMotion {
  int frames = 100;
  double rate_hz = 30.0;
  double translation_amplitude_mm = 150.0;
  double rotation_amplitude_rad = 0.07;
  std::uint64_t seed = 1;
};

/// Smooth 6-DoF motion: each twist component is a sinusoid with its own
/// frequency (0.15-0.35 Hz) and seeded phase. Starts at the identity.
std::vector<TimedPose> sinusoidal_trajectory(const TrajectoryMotion& motion);

struct FixtureOptions {
  TrajectoryMotion motion;
  bool noise = true;
  std::uint64_t seed = 1;
  /// Landmark count for fixtures that carry texture (-1 = fixture default).
  int landmarks = -1;
};

/// Three mutually orthogonal walls meeting 2 m ahead, with landmarks on them.
SyntheticScene make_corner3(const FixtureOptions& options = {});
/// One fronto-parallel wall at 2 m plus textured landmarks on it (default 200).
SyntheticScene make_wall_points(const FixtureOptions& options = {});
/// Two panels in a V plus the floor; no landmarks.
SyntheticScene make_notexture(const FixtureOptions& options = {});
/// Builds a fixture by name: corner3, wall+points, notexture.
SyntheticScene make_fixture(const std::string& name, const FixtureOptions& options = {});

/// Depth (mm, camera Z) of the nearest plane hit along the ray through
/// `pixel`, without noise. `camera_to_world` places the camera.
std::optional<double> ray_depth(const SyntheticScene& scene, const PoseSE3& camera_to_world,
                                const Vector2& pixel);

/// Ray-cast depth image with sigma_Z noise when scene.noise_enabled. Raw
/// values are mm (intrinsics.depth_scale = 1); misses are 0.
DepthImage render_depth(const SyntheticScene& scene, const PoseSE3& camera_to_world,
                        std::uint64_t seed, double timestamp = 0.0);

/// Deterministic per-frame seed derived from a run seed.
std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t frame, std::uint64_t stream = 0);

/// Plain-text scene records, one per line:
///   scene <name>
///   intrinsics fx fy cx cy width height depth_scale
///   noise sigma_p depth_sigma_coeff min_depth max_depth enabled
///   plane id ox oy oz ux uy uz vx vy vz extent_u extent_v
///   landmark id x y z
///   pose timestamp tx ty tz qx qy qz qw        (camera-to-world, mm)
void write_scene(const SyntheticScene& scene, std::ostream& out);
void write_scene(const SyntheticScene& scene, const std::filesystem::path& path);
SyntheticScene read_scene(std::istream& in);
SyntheticScene read_scene(const std::filesystem::path& path);

/// Draws from N(mean, cov); cov may be singular PSD.
class GaussianSampler {
 public:
  GaussianSampler(Eigen::VectorXd mean, const Eigen::MatrixXd& cov);
  Eigen::VectorXd operator()(std::mt19937_64& rng) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd factor_;
};

/// Empirical covariance of f(x) with x drawn by `generate(rng)`.
/// Deterministic for a given seed; requires samples >= 1000.
template <typename Generator, typename Function>
Eigen::MatrixXd monte_carlo_cov(Generator&& generate, Function&& f, int samples,
                                std::uint64_t seed = 1) {
  if (samples < 1000) throw std::invalid_argument("monte_carlo_cov needs at least 1000 samples");
  std::mt19937_64 rng(seed);
  Eigen::VectorXd mean;
  Eigen::MatrixXd m2;
  // Welford accumulation.
  for (int i = 0; i < samples; ++i) {
    const Eigen::VectorXd y = f(generate(rng));
    if (i == 0) {
      mean = Eigen::VectorXd::Zero(y.size());
      m2 = Eigen::MatrixXd::Zero(y.size(), y.size());
    }
    const Eigen::VectorXd delta = y - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (y - mean).transpose();
  }
  return 0.5 * (m2 + m2.transpose()) / static_cast<double>(samples - 1);
}

}  // namespace pvo
