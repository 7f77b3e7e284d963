#include "pvo/synthetic.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace pvo {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Vector3 uniform_on(const BoundedPlane& plane, double u0, double u1, double v0, double v1,
                   std::mt19937_64& rng) {
  std::uniform_real_distribution<double> du(u0, u1);
  std::uniform_real_distribution<double> dv(v0, v1);
  const double s = du(rng);
  const double t = dv(rng);
  return plane.origin + s * plane.axis_u + t * plane.axis_v;
}

}  // namespace

std::uint64_t frame_seed(std::uint64_t seed, std::uint64_t frame, std::uint64_t stream) {
  return splitmix64(splitmix64(splitmix64(seed) + frame) + stream);
}

std::vector<TimedPose> sinusoidal_trajectory(const TrajectoryMotion& motion) {
  static constexpr std::array<double, 6> kFrequencyHz{0.21, 0.27, 0.17, 0.31, 0.23, 0.19};
  std::mt19937_64 rng(frame_seed(motion.seed, 0, 0xC0FFEE));
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::array<double, 6> phase{};
  for (auto& p : phase) p = phase_dist(rng);

  std::vector<TimedPose> out;
  out.reserve(static_cast<std::size_t>(std::max(motion.frames, 0)));
  for (int i = 0; i < motion.frames; ++i) {
    const double t = static_cast<double>(i) / motion.rate_hz;
    Vector6 xi;
    for (int k = 0; k < 6; ++k) {
      const double amp = k < 3 ? motion.translation_amplitude_mm : motion.rotation_amplitude_rad;
      xi(k) = amp * (std::sin(2.0 * std::numbers::pi * kFrequencyHz[k] * t + phase[k]) - std::sin(phase[k]));
    }
    out.push_back({t, se3_exp(xi)});
  }
  return out;
}

SyntheticScene make_corner3(const FixtureOptions& options) {
  SyntheticScene scene;
  scene.name = "corner3";
  scene.noise_enabled = options.noise;
  scene.trajectory = sinusoidal_trajectory(options.motion);

  // Local axes whose positive octant faces the camera; the corner sits 2 m ahead.
  const Eigen::Quaterniond q =
      Eigen::Quaterniond::FromTwoVectors(Vector3(1, 1, 1).normalized(), Vector3(0, 0, -1));
  const Matrix3 axes = q.toRotationMatrix();
  const Vector3 corner(0.0, 0.0, 2000.0);
  const double extent = 3000.0;
  for (int i = 0; i < 3; ++i) {
    BoundedPlane wall;
    wall.id = i + 1;
    wall.origin = corner;
    wall.axis_u = axes.col((i + 1) % 3);
    wall.axis_v = axes.col((i + 2) % 3);
    wall.extent_u = extent;
    wall.extent_v = extent;
    scene.planes.push_back(wall);
  }

  const int count = options.landmarks >= 0 ? options.landmarks : 300;
  std::mt19937_64 rng(frame_seed(options.seed, 0, 0x1A4D));
  for (int i = 0; i < count; ++i) {
    const auto& wall = scene.planes[static_cast<std::size_t>(i) % 3];
    scene.landmarks.push_back({i + 1, uniform_on(wall, 100.0, 1700.0, 100.0, 1700.0, rng)});
  }
  return scene;
}

SyntheticScene make_wall_points(const FixtureOptions& options) {
  SyntheticScene scene;
  scene.name = "wall+points";
  scene.noise_enabled = options.noise;
  scene.trajectory = sinusoidal_trajectory(options.motion);

  BoundedPlane wall;
  wall.id = 1;
  wall.origin = Vector3(-2500.0, -2000.0, 2000.0);
  wall.axis_u = Vector3::UnitX();
  wall.axis_v = Vector3::UnitY();
  wall.extent_u = 5000.0;
  wall.extent_v = 4000.0;
  scene.planes.push_back(wall);

  const int count = options.landmarks >= 0 ? options.landmarks : 200;
  std::mt19937_64 rng(frame_seed(options.seed, 0, 0x1A4D));
  for (int i = 0; i < count; ++i)
    scene.landmarks.push_back({i + 1, uniform_on(wall, 1400.0, 3600.0, 1150.0, 2850.0, rng)});
  return scene;
}

SyntheticScene make_notexture(const FixtureOptions& options) {
  SyntheticScene scene;
  scene.name = "notexture";
  scene.noise_enabled = options.noise;
  scene.trajectory = sinusoidal_trajectory(options.motion);

  const double a = 35.0 * std::numbers::pi / 180.0;
  const Vector3 ridge_top(0.0, -1200.0, 2200.0);
  BoundedPlane left;
  left.id = 1;
  left.origin = ridge_top;
  left.axis_u = Vector3(-std::cos(a), 0.0, -std::sin(a));
  left.axis_v = Vector3::UnitY();
  left.extent_u = 1700.0;
  left.extent_v = 1650.0;
  BoundedPlane right = left;
  right.id = 2;
  right.axis_u = Vector3(std::cos(a), 0.0, -std::sin(a));
  BoundedPlane floor;
  floor.id = 3;
  floor.origin = Vector3(-3000.0, 450.0, 300.0);
  floor.axis_u = Vector3::UnitZ();
  floor.axis_v = Vector3::UnitX();
  floor.extent_u = 4000.0;
  floor.extent_v = 6000.0;
  scene.planes = {left, right, floor};
  return scene;
}

SyntheticScene make_fixture(const std::string& name, const FixtureOptions& options) {
  if (name == "corner3") return make_corner3(options);
  if (name == "wall+points" || name == "wall_points") return make_wall_points(options);
  if (name == "notexture") return make_notexture(options);
  throw std::invalid_argument("unknown fixture: " + name);
}

std::optional<double> ray_depth(const SyntheticScene& scene, const PoseSE3& camera_to_world,
                                const Vector2& pixel) {
  const auto& k = scene.intrinsics;
  const Vector3 ray_cam((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
  const Vector3 dir = camera_to_world.rotation * ray_cam;
  const Vector3& centre = camera_to_world.translation;

  constexpr double kEdgeTol = 1e-9;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& plane : scene.planes) {
    const Vector3 n = plane.normal();
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    // With ray_cam.z == 1 the ray parameter equals the camera-frame depth.
    const double t = n.dot(plane.origin - centre) / denom;
    if (!(t > 0.0) || t >= best) continue;
    const Vector3 rel = centre + t * dir - plane.origin;
    const double s = plane.axis_u.dot(rel);
    const double r = plane.axis_v.dot(rel);
    if (s < -kEdgeTol || s > plane.extent_u + kEdgeTol || r < -kEdgeTol || r > plane.extent_v + kEdgeTol)
      continue;
    best = t;
  }
  if (!std::isfinite(best)) return std::nullopt;
  return best;
}

DepthImage render_depth(const SyntheticScene& scene, const PoseSE3& camera_to_world,
                        std::uint64_t seed, double timestamp) {
  CameraIntrinsics k = scene.intrinsics;
  k.depth_scale = 1.0;
  DepthImage img(k.height, k.width, k, timestamp);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int r = 0; r < k.height; ++r) {
    for (int c = 0; c < k.width; ++c) {
      auto z = ray_depth(scene, camera_to_world, Vector2(c, r));
      if (!z) continue;
      double value = *z;
      if (scene.noise_enabled) value += depth_sigma(*z, scene.noise) * gauss(rng);
      img.at(r, c) = value > 0.0 ? value : 0.0;
    }
  }
  return img;
}

void write_scene(const SyntheticScene& scene, std::ostream& out) {
  out << std::setprecision(17);
  out << "# planar odometry synthetic scene, lengths in mm\n";
  out << "scene " << (scene.name.empty() ? "unnamed" : scene.name) << '\n';
  const auto& k = scene.intrinsics;
  out << "intrinsics " << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.width << ' '
      << k.height << ' ' << k.depth_scale << '\n';
  const auto& n = scene.noise;
  out << "noise " << n.sigma_p << ' ' << n.depth_sigma_coeff << ' ' << n.min_depth_mm << ' '
      << n.max_depth_mm << ' ' << (scene.noise_enabled ? 1 : 0) << '\n';
  for (const auto& p : scene.planes) {
    out << "plane " << p.id << ' ' << p.origin.x() << ' ' << p.origin.y() << ' ' << p.origin.z() << ' '
        << p.axis_u.x() << ' ' << p.axis_u.y() << ' ' << p.axis_u.z() << ' ' << p.axis_v.x() << ' '
        << p.axis_v.y() << ' ' << p.axis_v.z() << ' ' << p.extent_u << ' ' << p.extent_v << '\n';
  }
  for (const auto& l : scene.landmarks)
    out << "landmark " << l.id << ' ' << l.position.x() << ' ' << l.position.y() << ' '
        << l.position.z() << '\n';
  for (const auto& tp : scene.trajectory) {
    const Eigen::Quaterniond q(tp.pose.rotation);
    const auto& t = tp.pose.translation;
    out << "pose " << tp.timestamp << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x()
        << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
}

void write_scene(const SyntheticScene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scene file: " + path.string());
  write_scene(scene, out);
  if (!out) throw std::runtime_error("failed writing scene file: " + path.string());
}

SyntheticScene read_scene(std::istream& in) {
  SyntheticScene scene;
  scene.planes.clear();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    bool ok = true;
    if (tag == "scene") {
      ok = static_cast<bool>(ss >> scene.name);
    } else if (tag == "intrinsics") {
      auto& k = scene.intrinsics;
      ok = static_cast<bool>(ss >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height >> k.depth_scale);
    } else if (tag == "noise") {
      auto& n = scene.noise;
      int enabled = 0;
      ok = static_cast<bool>(ss >> n.sigma_p >> n.depth_sigma_coeff >> n.min_depth_mm >> n.max_depth_mm >> enabled);
      scene.noise_enabled = enabled != 0;
    } else if (tag == "plane") {
      BoundedPlane p;
      ok = static_cast<bool>(ss >> p.id >> p.origin.x() >> p.origin.y() >> p.origin.z() >> p.axis_u.x() >>
                             p.axis_u.y() >> p.axis_u.z() >> p.axis_v.x() >> p.axis_v.y() >>
                             p.axis_v.z() >> p.extent_u >> p.extent_v);
      scene.planes.push_back(p);
    } else if (tag == "landmark") {
      Landmark l;
      ok = static_cast<bool>(ss >> l.id >> l.position.x() >> l.position.y() >> l.position.z());
      scene.landmarks.push_back(l);
    } else if (tag == "pose") {
      TimedPose tp;
      Eigen::Quaterniond q;
      ok = static_cast<bool>(ss >> tp.timestamp >> tp.pose.translation.x() >> tp.pose.translation.y() >>
                             tp.pose.translation.z() >> q.x() >> q.y() >> q.z() >> q.w());
      tp.pose.rotation = q.normalized().toRotationMatrix();
      scene.trajectory.push_back(tp);
    } else {
      throw std::runtime_error("scene file line " + std::to_string(line_no) + ": unknown record '" + tag + "'");
    }
    if (!ok) throw std::runtime_error("scene file line " + std::to_string(line_no) + ": malformed record");
  }
  return scene;
}

SyntheticScene read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file: " + path.string());
  return read_scene(in);
}

GaussianSampler::GaussianSampler(Eigen::VectorXd mean, const Eigen::MatrixXd& cov)
    : mean_(std::move(mean)) {
  if (cov.rows() != mean_.size() || cov.cols() != mean_.size())
    throw std::invalid_argument("GaussianSampler: covariance size does not match the mean");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov + cov.transpose()));
  const double scale = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  if (es.eigenvalues().minCoeff() < -1e-9 * scale)
    throw std::invalid_argument("GaussianSampler: covariance is not positive semidefinite");
  factor_ = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Eigen::VectorXd GaussianSampler::operator()(std::mt19937_64& rng) const {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd z(mean_.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = gauss(rng);
  return mean_ + factor_ * z;
}

}  // namespace pvo
