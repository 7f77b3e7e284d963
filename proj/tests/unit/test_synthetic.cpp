#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include <doctest.h>

#include "pvo/backprojection.hpp"
#include "pvo/synthetic.hpp"
#include "support.hpp"

using namespace pvo;

namespace {

SyntheticScene quiet(SyntheticScene scene) {
  scene.noise_enabled = false;
  return scene;
}

double distance_to_rectangle_plane(const BoundedPlane& p, const Vector3& x) {
  return std::abs(p.normal().dot(x - p.origin));
}

bool inside(const BoundedPlane& p, const Vector3& x, double slack) {
  const double s = p.axis_u.dot(x - p.origin), t = p.axis_v.dot(x - p.origin);
  return s >= -slack && s <= p.extent_u + slack && t >= -slack && t <= p.extent_v + slack;
}

}  // namespace

TEST_CASE("render_depth of a fronto-parallel wall") {
  const SyntheticScene scene = quiet(make_wall_points());
  const DepthImage depth = render_depth(scene, PoseSE3::identity(), 1);
  CHECK(depth.rows == 480);
  CHECK(depth.cols == 640);
  for (double v : depth.raw) REQUIRE(v == doctest::Approx(2000.0).epsilon(1e-12));

  // Stepping 500 mm towards the wall.
  const DepthImage nearer = render_depth(scene, PoseSE3::from(Matrix3::Identity(), Vector3(0, 0, 500)), 1);
  CHECK(nearer.at(240, 320) == doctest::Approx(1500.0));
}

TEST_CASE("render_depth noise matches the depth model") {
  const SyntheticScene scene = make_wall_points();
  const DepthImage depth = render_depth(scene, PoseSE3::identity(), 7);
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (double v : depth.raw) {
    if (v <= 0.0) continue;
    sum += v;
    sum2 += v * v;
    ++n;
  }
  REQUIRE(n >= 100000);
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(sd - depth_sigma(2000.0, scene.noise)) <= 0.05 * depth_sigma(2000.0, scene.noise));
  CHECK(std::abs(mean - 2000.0) < 0.1);
}

TEST_CASE("render_depth is seeded") {
  const SyntheticScene scene = make_corner3();
  const PoseSE3 pose = scene.trajectory[5].pose;
  const DepthImage a = render_depth(scene, pose, 11), b = render_depth(scene, pose, 11), c = render_depth(scene, pose, 12);
  CHECK(a.raw == b.raw);
  CHECK(a.raw != c.raw);
}

TEST_CASE("camera facing away sees nothing") {
  const SyntheticScene scene = make_corner3();
  const PoseSE3 away = PoseSE3::from(Eigen::AngleAxisd(M_PI * 0.999, Vector3::UnitY()).toRotationMatrix(), Vector3::Zero());
  const DepthImage depth = render_depth(scene, away, 1);
  for (double v : depth.raw) REQUIRE(v == 0.0);
  CHECK(OrganizedCloud::from_depth(depth, scene.noise).valid_count() == 0);
}

TEST_CASE("noise-free depth back-projects onto the scene planes") {
  for (const char* name : {"corner3", "wall+points", "notexture"}) {
    const SyntheticScene scene = quiet(make_fixture(name));
    for (std::size_t f : {0u, 37u, 99u}) {
      const PoseSE3 pose = scene.trajectory[f].pose;
      const DepthImage depth = render_depth(scene, pose, 3);
      double worst = 0.0;
      std::size_t valid = 0, outside = 0;
      for (int r = 0; r < depth.rows; r += 3)
        for (int c = 0; c < depth.cols; c += 3) {
          if (depth.at(r, c) <= 0.0) continue;
          ++valid;
          const Vector3 world = se3_apply(pose, backproject(Vector2(c, r), depth.at(r, c), scene.intrinsics));
          double best = 1e300;
          const BoundedPlane* hit = nullptr;
          for (const auto& p : scene.planes) {
            const double d = distance_to_rectangle_plane(p, world);
            if (d < best) {
              best = d;
              hit = &p;
            }
          }
          worst = std::max(worst, best);
          outside += !inside(*hit, world, 1e-6);
        }
      CHECK(valid > 1000);
      CHECK(worst < 1e-6);
      CHECK(outside == 0);
    }
  }
}

TEST_CASE("ray_depth picks the nearest plane") {
  SyntheticScene scene = quiet(make_wall_points());
  BoundedPlane front = scene.planes[0];
  front.id = 2;
  front.origin.z() = 1200.0;
  front.extent_u = 1000.0;  // x in [-2500, -1500]
  scene.planes.push_back(front);
  const CameraIntrinsics& k = scene.intrinsics;
  // Left edge ray at Z=1200 has x = -319.5/525*1200 = -730: misses the front panel.
  CHECK(*ray_depth(scene, PoseSE3::identity(), Vector2(k.cx, k.cy)) == doctest::Approx(2000.0));
  const PoseSE3 shifted = PoseSE3::from(Matrix3::Identity(), Vector3(-2000, 0, 0));
  CHECK(*ray_depth(scene, shifted, Vector2(k.cx, k.cy)) == doctest::Approx(1200.0));
  scene.planes.clear();
  CHECK_FALSE(ray_depth(scene, PoseSE3::identity(), Vector2(k.cx, k.cy)));
}

TEST_CASE("sinusoidal trajectory") {
  TrajectoryMotion motion;
  const auto a = sinusoidal_trajectory(motion);
  REQUIRE(a.size() == 100);
  CHECK((a[0].pose.matrix() - Matrix4::Identity()).norm() < 1e-15);
  CHECK(a[30].timestamp == doctest::Approx(1.0));
  const auto b = sinusoidal_trajectory(motion);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].pose.matrix() == b[i].pose.matrix());
  motion.seed = 2;
  const auto c = sinusoidal_trajectory(motion);
  CHECK((c[50].pose.matrix() - a[50].pose.matrix()).norm() > 1e-3);
  // Small steps at 30 Hz.
  for (std::size_t i = 1; i < a.size(); ++i) {
    const PoseSE3 step = a[i - 1].pose.inverse() * a[i].pose;
    CHECK(step.translation.norm() < 20.0);
    CHECK(rotation_angle(step.rotation) < 0.02);
  }
}

TEST_CASE("fixtures") {
  CHECK(make_fixture("corner3").planes.size() == 3);
  CHECK(make_fixture("wall+points").landmarks.size() == 200);
  CHECK(make_fixture("notexture").landmarks.empty());
  CHECK_THROWS_AS(make_fixture("atrium"), std::invalid_argument);

  FixtureOptions options;
  options.landmarks = 50;
  for (const auto& scene : {make_corner3(options), make_wall_points(options)}) {
    CHECK(scene.landmarks.size() == 50);
    std::set<std::int64_t> ids;
    for (const auto& lm : scene.landmarks) {
      ids.insert(lm.id);
      double best = 1e300;
      for (const auto& p : scene.planes) best = std::min(best, distance_to_rectangle_plane(p, lm.position));
      CHECK(best < 1e-9);
    }
    CHECK(ids.size() == 50);
  }
  for (const auto& p : make_corner3().planes) CHECK(std::abs(p.axis_u.dot(p.axis_v)) < 1e-12);
}

TEST_CASE("frame_seed separates frames and streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 4; ++s)
    for (std::uint64_t f = 0; f < 200; ++f)
      for (std::uint64_t k = 0; k < 3; ++k) seen.insert(frame_seed(s, f, k));
  CHECK(seen.size() == 4 * 200 * 3);
  CHECK(frame_seed(5, 6, 7) == frame_seed(5, 6, 7));
}

TEST_CASE("monte_carlo_cov self-checks") {
  Eigen::MatrixXd cov(3, 3);
  cov << 4.0, 1.0, 0.5, 1.0, 9.0, -2.0, 0.5, -2.0, 2.0;
  const GaussianSampler sampler(Eigen::Vector3d(1, 2, 3), cov);
  auto identity = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x; };

  const Eigen::MatrixXd mc = monte_carlo_cov(sampler, identity, 100000, 5);
  CHECK(test::covariance_relative_error(mc, cov) < 0.05);

  const Eigen::MatrixXd zero =
      monte_carlo_cov(sampler, [](const Eigen::VectorXd&) -> Eigen::VectorXd { return Eigen::Vector2d(3, -1); }, 1000);
  CHECK(zero.norm() == 0.0);

  Eigen::MatrixXd a(2, 3);
  a << 1, -2, 0.5, 0, 3, 1;
  const Eigen::MatrixXd lin = monte_carlo_cov(sampler, [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return a * x; }, 100000, 6);
  CHECK(test::covariance_relative_error(lin, a * cov * a.transpose()) < 0.05);

  CHECK(monte_carlo_cov(sampler, identity, 2000, 9) == monte_carlo_cov(sampler, identity, 2000, 9));
  CHECK_THROWS_AS(monte_carlo_cov(sampler, identity, 999), std::invalid_argument);
}

TEST_CASE("GaussianSampler handles singular covariance") {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 3);
  cov(0, 0) = 4.0;
  const GaussianSampler sampler(Eigen::Vector3d(1, 2, 3), cov);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd x = sampler(rng);
    CHECK(x[1] == 2.0);
    CHECK(x[2] == 3.0);
  }
  Eigen::MatrixXd indefinite = Eigen::MatrixXd::Identity(2, 2);
  indefinite(1, 1) = -1.0;
  CHECK_THROWS_AS(GaussianSampler(Eigen::Vector2d::Zero(), indefinite), std::invalid_argument);
}

TEST_CASE("scene file round trip") {
  FixtureOptions options;
  options.landmarks = 30;
  options.motion.frames = 10;
  for (const auto& scene : {make_corner3(options), make_notexture(options)}) {
    std::stringstream ss;
    write_scene(scene, ss);
    const SyntheticScene back = read_scene(ss);
    CHECK(back.name == scene.name);
    CHECK(back.noise_enabled == scene.noise_enabled);
    CHECK(back.intrinsics.fx == scene.intrinsics.fx);
    CHECK(back.noise.depth_sigma_coeff == scene.noise.depth_sigma_coeff);
    REQUIRE(back.planes.size() == scene.planes.size());
    for (std::size_t i = 0; i < back.planes.size(); ++i) {
      CHECK((back.planes[i].origin - scene.planes[i].origin).norm() < 1e-9);
      CHECK((back.planes[i].axis_u - scene.planes[i].axis_u).norm() < 1e-12);
      CHECK(back.planes[i].extent_v == doctest::Approx(scene.planes[i].extent_v));
    }
    REQUIRE(back.landmarks.size() == scene.landmarks.size());
    for (std::size_t i = 0; i < back.landmarks.size(); ++i) {
      CHECK(back.landmarks[i].id == scene.landmarks[i].id);
      CHECK((back.landmarks[i].position - scene.landmarks[i].position).norm() < 1e-9);
    }
    REQUIRE(back.trajectory.size() == scene.trajectory.size());
    for (std::size_t i = 0; i < back.trajectory.size(); ++i)
      CHECK((back.trajectory[i].pose.matrix() - scene.trajectory[i].pose.matrix()).norm() < 1e-9);
  }

  std::istringstream bad("scene x\nplane 1 2 3\n");
  CHECK_THROWS(read_scene(bad));
  std::istringstream unknown("scene x\nsphere 1 2 3 4\n");
  CHECK_THROWS(read_scene(unknown));
}
