#include <cmath>
#include <random>

#include <doctest.h>
#include <Eigen/Geometry>

#include "pvo/association.hpp"
#include "pvo/backprojection.hpp"
#include "pvo/plane_extraction.hpp"
#include "pvo/pose_solver.hpp"
#include "pvo/synthetic.hpp"
#include "support.hpp"

using namespace pvo;

namespace {

const CameraIntrinsics kCamera;
const NoiseModel kNoise;

Point3WithCov observed(const Vector3& p) {
  const Vector2 px(kCamera.fx * p.x() / p.z() + kCamera.cx, kCamera.fy * p.y() / p.z() + kCamera.cy);
  return backproject_with_cov(px, p.z(), kCamera, kNoise);
}

// A point seen in front of the camera in both frames, optionally with noise
// drawn from each observation's own covariance.
PointMatch point_match(const PoseSE3& pose, std::mt19937_64& rng, bool noisy) {
  std::uniform_real_distribution<double> u(-0.4, 0.4), z(1000.0, 3500.0);
  const double depth = z(rng);
  const Vector3 p(u(rng) * depth, u(rng) * depth, depth);
  PointMatch m;
  m.prev = observed(p);
  m.curr = observed(se3_apply(pose, p));
  if (noisy) {
    for (auto* obs : {&m.prev, &m.curr}) {
      GaussianSampler s(obs->position, obs->covariance);
      obs->position = s(rng);
    }
  }
  return m;
}

std::vector<PointMatch> point_matches(const PoseSE3& pose, int count, std::mt19937_64& rng, bool noisy) {
  std::vector<PointMatch> out;
  for (int i = 0; i < count; ++i) out.push_back(point_match(pose, rng, noisy));
  return out;
}

// Plane with a covariance from a WLS fit of `count` points at its distance.
PlaneHessian fitted_plane(const Vector3& normal, double d, int count = 500) {
  PlaneMinimal m;
  m.theta_m = normal.normalized() / d;
  const double z = std::abs(d);
  const double sz = depth_sigma(z, kNoise);
  // A ~ sum w P P^T for points spread over a 1 m patch; only its scale matters here.
  Matrix3 a = Matrix3::Zero();
  std::mt19937_64 rng(static_cast<std::uint64_t>(z));
  std::uniform_real_distribution<double> u(-500.0, 500.0);
  for (int i = 0; i < count; ++i) {
    Vector3 p = -d * normal.normalized() + u(rng) * normal.unitOrthogonal() +
                u(rng) * normal.normalized().cross(normal.unitOrthogonal());
    a += p * p.transpose() / (sz * sz);
  }
  m.covariance = a.inverse() / 1e6;
  PlaneHessian h = to_hessian(m);
  h.inlier_mask = Bitmask(64);
  h.inlier_count = static_cast<std::size_t>(count);
  return h;
}

std::vector<PlaneMatch> corner_matches(const PoseSE3& pose) {
  std::vector<PlaneMatch> out;
  const Vector3 normals[3] = {Vector3(0.0, 0.3, 1.0), Vector3(1.0, 0.1, 0.4), Vector3(-0.3, 1.0, 0.2)};
  const double ds[3] = {-2000.0, -1200.0, -900.0};
  for (int i = 0; i < 3; ++i) {
    PlaneMatch m;
    m.prev = fitted_plane(normals[i], ds[i]);
    PlaneHessian moved = transform_plane(pose, m.prev);
    m.curr = fitted_plane(moved.normal, moved.d);
    out.push_back(m);
  }
  return out;
}

double translation_error(const PoseSE3& a, const PoseSE3& b) { return (a.translation - b.translation).norm(); }
double rotation_error(const PoseSE3& a, const PoseSE3& b) { return rotation_angle(a.rotation.transpose() * b.rotation); }

PoseSE3 small_pose(std::mt19937_64& rng) { return test::random_pose(rng, 40.0, 0.05); }

}  // namespace

TEST_CASE("point_residual examples") {
  PointMatch m;
  m.prev.position = m.curr.position = Vector3(10, 20, 1500);
  CHECK(point_residual(PoseSE3::identity(), m).norm() == 0.0);
  const PoseSE3 shift = PoseSE3::from(Matrix3::Identity(), Vector3(5, -3, 12));
  m.curr.position = m.prev.position + shift.translation;
  CHECK(point_residual(shift, m).norm() == 0.0);

  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const PoseSE3 pose = test::random_pose(rng, 200.0, 0.3);
    PointMatch r = point_match(pose, rng, true);
    const Vector3 expected = r.curr.position - (pose.rotation * r.prev.position + pose.translation);
    CHECK((point_residual(pose, r) - expected).norm() < 1e-9);
  }
}

TEST_CASE("plane_residual examples") {
  PlaneMatch m;
  m.prev.normal = m.curr.normal = Vector3::UnitZ();
  m.prev.d = m.curr.d = -1000.0;
  CHECK(plane_residual(PoseSE3::identity(), m).norm() == 0.0);

  m.curr.d = -1100.0;
  CHECK(plane_residual(PoseSE3::from(Matrix3::Identity(), Vector3(0, 0, 100)), m).norm() < 1e-12);
  CHECK(plane_residual(PoseSE3::identity(), m).norm() == doctest::Approx(100.0));

  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 200; ++trial) {
    const PoseSE3 pose = test::random_pose(rng);
    PlaneMatch r;
    r.prev.normal = test::random_unit(rng);
    r.prev.d = -std::uniform_real_distribution<double>(300, 5000)(rng);
    r.curr.normal = test::random_unit(rng);
    r.curr.d = -std::uniform_real_distribution<double>(300, 5000)(rng);
    const double expected = plane_to_plane_distance(transform_plane(pose, r.prev), r.curr);
    CHECK(std::abs(plane_residual(pose, r).norm() - expected) <= 1e-12 * std::max(1.0, expected));
  }
}

TEST_CASE("residual Jacobians match central differences") {
  std::mt19937_64 rng(63);
  auto check_fd = [](const auto& residual, const PoseSE3& pose, const Eigen::Matrix<double, 3, 6>& analytic) {
    Eigen::Matrix<double, 3, 6> fd;
    for (int c = 0; c < 6; ++c) {
      const double h = c < 3 ? 1e-4 : 1e-7;
      Vector6 d = Vector6::Zero();
      d[c] = h;
      fd.col(c) = (residual(se3_exp(d) * pose) - residual(se3_exp(-d) * pose)) / (2 * h);
    }
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    return ((analytic - fd).cwiseAbs().maxCoeff() / scale);
  };
  double worst_point = 0.0, worst_plane = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const PoseSE3 pose = test::random_pose(rng, 300.0, 1.0);
    const PointMatch pm = point_match(pose, rng, true);
    worst_point = std::max(worst_point, check_fd([&](const PoseSE3& p) { return point_residual(p, pm); }, pose,
                                                 point_residual_jacobian(pose, pm)));
    PlaneMatch lm;
    lm.prev.normal = test::random_unit(rng);
    lm.prev.d = -std::uniform_real_distribution<double>(300, 5000)(rng);
    lm.curr = transform_plane(test::random_pose(rng, 50.0, 0.1) * pose, lm.prev);
    worst_plane = std::max(worst_plane, check_fd([&](const PoseSE3& p) { return plane_residual(p, lm); }, pose,
                                                 plane_residual_jacobian(pose, lm)));
  }
  CHECK(worst_point < 1e-5);
  CHECK(worst_plane < 1e-5);
}

TEST_CASE("residual_weights examples") {
  PointMatch m;
  const double s2 = 9.0;
  m.prev.covariance = m.curr.covariance = s2 * Matrix3::Identity();
  const auto w = residual_weights(PoseSE3::identity(), m);
  CHECK((w.covariance - 2 * s2 * Matrix3::Identity()).norm() < 1e-12);
  CHECK((w.weights - Vector3::Constant(1.0 / (2 * s2))).norm() < 1e-15);

  PointMatch near, far;
  near.prev = near.curr = backproject_with_cov(Vector2(200, 300), 1000.0, kCamera, kNoise);
  far.prev = far.curr = backproject_with_cov(Vector2(200, 300), 4000.0, kCamera, kNoise);
  CHECK(residual_weights(PoseSE3::identity(), far).weights.z() < residual_weights(PoseSE3::identity(), near).weights.z());

  // Degenerate zero covariance is clamped.
  PointMatch exact;
  const SolverConfig config;
  CHECK(residual_weights(PoseSE3::identity(), exact, config).weights == Vector3::Constant(config.w_max));
}

TEST_CASE("residual_weights follow Monte Carlo residual variance") {
  std::mt19937_64 rng(64);
  for (int trial = 0; trial < 5; ++trial) {
    const PoseSE3 pose = small_pose(rng);
    const PointMatch m = point_match(pose, rng, false);
    const Matrix3 predicted = residual_weights(pose, m).covariance;
    Eigen::VectorXd mean(6);
    mean << m.prev.position, m.curr.position;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(6, 6);
    cov.topLeftCorner(3, 3) = m.prev.covariance;
    cov.bottomRightCorner(3, 3) = m.curr.covariance;
    const Eigen::MatrixXd mc = monte_carlo_cov(
        GaussianSampler(mean, cov),
        [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
          PointMatch p = m;
          p.prev.position = x.head<3>();
          p.curr.position = x.tail<3>();
          return point_residual(pose, p);
        },
        100000, 70 + trial);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(predicted(k, k) - mc(k, k)) <= 0.15 * mc(k, k));
  }

  for (int trial = 0; trial < 5; ++trial) {
    const PoseSE3 pose = small_pose(rng);
    const Vector3 n(std::uniform_real_distribution<double>(-0.5, 0.5)(rng), std::uniform_real_distribution<double>(-0.5, 0.5)(rng), 1.0);
    PlaneMatch m;
    m.prev = fitted_plane(n, -1800.0, 300);
    const PlaneHessian moved = transform_plane(pose, m.prev);
    m.curr = fitted_plane(moved.normal, moved.d, 300);
    const Matrix3 predicted = residual_weights(pose, m).covariance;

    // Perturb both planes in their minimal form and map through the Hessian form.
    auto minimal = [](const PlaneHessian& h) -> Vector3 { return h.normal / h.d; };
    auto minimal_cov = [](const PlaneHessian& h) -> Matrix3 {
      // Inverse of to_hessian's Jacobian on the tangent space.
      const Vector3 theta = h.normal / h.d;
      const auto j = to_hessian_jacobian(theta);
      const Eigen::Matrix<double, 3, 4> pinv = (j.transpose() * j).inverse() * j.transpose();
      return pinv * h.covariance * pinv.transpose();
    };
    Eigen::VectorXd mean(6);
    mean << minimal(m.prev), minimal(m.curr);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(6, 6);
    cov.topLeftCorner(3, 3) = minimal_cov(m.prev);
    cov.bottomRightCorner(3, 3) = minimal_cov(m.curr);
    const Eigen::MatrixXd mc = monte_carlo_cov(
        GaussianSampler(mean, cov),
        [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
          PlaneMinimal a, b;
          a.theta_m = x.head<3>();
          b.theta_m = x.tail<3>();
          PlaneMatch p = m;
          p.prev = to_hessian(a);
          p.curr = to_hessian(b);
          return plane_residual(pose, p);
        },
        100000, 80 + trial);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(predicted(k, k) - mc(k, k)) <= 0.15 * mc(k, k));
  }
}

TEST_CASE("residual_weights include the pose covariance when asked") {
  std::mt19937_64 rng(65);
  PoseSE3 pose = small_pose(rng);
  const PointMatch m = point_match(pose, rng, false);
  Matrix6 cov = Matrix6::Identity() * 1e-2;
  pose.covariance = cov;
  SolverConfig config;
  const auto without = residual_weights(pose, m, config);
  config.include_pose_covariance = true;
  const auto with = residual_weights(pose, m, config);
  const auto j = point_residual_jacobian(pose, m);
  CHECK((with.covariance - without.covariance - j * cov * j.transpose()).norm() < 1e-9);
  CHECK((with.weights.array() < without.weights.array()).all());
}

TEST_CASE("tukey_weight") {
  CHECK(tukey_weight(0.0, 4.685) == 1.0);
  CHECK(tukey_weight(4.685, 4.685) == 0.0);
  CHECK(tukey_weight(-10.0, 4.685) == 0.0);
  CHECK(tukey_weight(2.0, 4.0) == doctest::Approx(0.5625));
  CHECK(tukey_weight(-2.0, 4.0) == tukey_weight(2.0, 4.0));
}

TEST_CASE("decayed_velocity") {
  Vector6 v;
  v << 10, -5, 3, 0.01, 0.02, -0.03;
  CHECK((decayed_velocity(Vector6::Zero(), 0.5).matrix() - Matrix4::Identity()).norm() == 0.0);
  CHECK((decayed_velocity(v, 0.0).matrix() - Matrix4::Identity()).norm() == 0.0);
  CHECK((decayed_velocity(v, 1.0).matrix() - se3_exp(v).matrix()).norm() == 0.0);
  CHECK((se3_log(decayed_velocity(v, 0.5)) - 0.5 * v).norm() < 1e-12);
  CHECK_THROWS_AS(decayed_velocity(v, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(decayed_velocity(v, -0.1), std::invalid_argument);
}

TEST_CASE("solve_pose: exact point matches") {
  std::mt19937_64 rng(66);
  for (int trial = 0; trial < 20; ++trial) {
    const PoseSE3 truth = small_pose(rng);
    const auto matches = point_matches(truth, 10, rng, false);
    const SolverReport r = solve_pose(matches, {}, Vector6::Zero());
    CHECK(r.fallback_used == Fallback::none);
    CHECK(r.converged);
    CHECK((se3_log(r.pose) - se3_log(truth)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(r.point_match_count == 10);
  }
}

TEST_CASE("solve_pose: three exact planes of a corner") {
  std::mt19937_64 rng(67);
  for (int trial = 0; trial < 20; ++trial) {
    const PoseSE3 truth = small_pose(rng);
    const SolverReport r = solve_pose({}, corner_matches(truth), Vector6::Zero());
    CHECK(r.fallback_used == Fallback::none);
    CHECK((se3_log(r.pose) - se3_log(truth)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(r.plane_match_count == 3);
  }
}

TEST_CASE("solve_pose: too few matches falls back") {
  std::mt19937_64 rng(68);
  const PoseSE3 truth = small_pose(rng);
  Vector6 prior;
  prior << 20, 0, -10, 0.01, 0, 0.02;
  const SolverReport r = solve_pose(point_matches(truth, 2, rng, false), {}, prior);
  CHECK(r.fallback_used == Fallback::decayed_velocity_few_matches);
  CHECK((r.pose.matrix() - se3_exp(0.5 * prior).matrix()).norm() < 1e-12);
  CHECK_FALSE(r.covariance);

  const SolverReport empty = solve_pose({}, {}, prior);
  CHECK(empty.fallback_used == Fallback::decayed_velocity_few_matches);
}

TEST_CASE("solve_pose: degenerate geometry trips the covariance gate") {
  // Three matches along one line leave the rotation about it unconstrained.
  std::vector<PointMatch> matches;
  for (int i = 0; i < 3; ++i) {
    PointMatch m;
    m.prev = m.curr = observed(Vector3(100.0 * i, 0.0, 2000.0));
    matches.push_back(m);
  }
  Vector6 prior;
  prior << 4, 0, 0, 0, 0, 0;
  const SolverReport r = solve_pose(matches, {}, prior);
  CHECK(r.fallback_used == Fallback::decayed_velocity_covariance_gate);
  CHECK((r.pose.matrix() - decayed_velocity(prior, 0.5).matrix()).norm() < 1e-12);
}

TEST_CASE("solve_pose: non-finite input falls back") {
  std::mt19937_64 rng(69);
  auto matches = point_matches(small_pose(rng), 10, rng, false);
  matches[3].curr.position.x() = std::numeric_limits<double>::quiet_NaN();
  const SolverReport r = solve_pose(matches, {}, Vector6::Zero());
  CHECK(r.fallback_used == Fallback::decayed_velocity_non_finite);
  CHECK((r.pose.matrix() - Matrix4::Identity()).norm() == 0.0);
}

TEST_CASE("solve_pose: Tukey suppresses gross outliers") {
  std::mt19937_64 rng(70);
  for (int trial = 0; trial < 10; ++trial) {
    const PoseSE3 truth = small_pose(rng);
    const auto good = point_matches(truth, 20, rng, true);
    auto with_outliers = good;
    for (int i = 0; i < 5; ++i) {
      PointMatch m = point_match(truth, rng, true);
      m.curr.position += 500.0 * test::random_unit(rng);
      with_outliers.push_back(m);
    }
    const double clean = translation_error(solve_pose(good, {}, Vector6::Zero()).pose, truth);
    const SolverReport r = solve_pose(with_outliers, {}, Vector6::Zero());
    CHECK(r.fallback_used == Fallback::none);
    CHECK(translation_error(r.pose, truth) <= 2.0 * clean);
  }
}

TEST_CASE("solve_pose: isotropic equal covariances reproduce the closed-form alignment") {
  std::mt19937_64 rng(71);
  for (bool noisy : {false, true}) {
    const PoseSE3 truth = small_pose(rng);
    auto matches = point_matches(truth, 40, rng, noisy);
    for (auto& m : matches) m.prev.covariance = m.curr.covariance = 4.0 * Matrix3::Identity();
    Eigen::Matrix<double, 3, Eigen::Dynamic> src(3, matches.size()), dst(3, matches.size());
    for (std::size_t i = 0; i < matches.size(); ++i) {
      src.col(static_cast<Eigen::Index>(i)) = matches[i].prev.position;
      dst.col(static_cast<Eigen::Index>(i)) = matches[i].curr.position;
    }
    const Matrix4 oracle = Eigen::umeyama(src, dst, false);
    SolverConfig config;
    config.robust_points = false;
    for (auto weighting : {Weighting::probabilistic, Weighting::deterministic}) {
      config.weighting = weighting;
      const SolverReport r = solve_pose(matches, {}, Vector6::Zero(), config);
      CHECK((r.pose.translation - oracle.topRightCorner<3, 1>()).norm() < 1e-6);
      CHECK(rotation_angle(r.pose.rotation.transpose() * oracle.topLeftCorner<3, 3>()) < 1e-6);
    }
  }
}

TEST_CASE("solve_pose: accepted steps decrease the cost") {
  std::mt19937_64 rng(72);
  for (int trial = 0; trial < 10; ++trial) {
    const PoseSE3 truth = test::random_pose(rng, 80.0, 0.1);
    const auto pts = point_matches(truth, 60, rng, true);
    const SolverReport r = solve_pose(pts, corner_matches(truth), Vector6::Zero());
    REQUIRE_FALSE(r.accepted_steps.empty());
    for (const auto& [before, after] : r.accepted_steps) CHECK(after < before);
    CHECK(r.iterates.size() == static_cast<std::size_t>(r.iterations));

    // With fixed (non-robust) weights the final cost is below the initial one.
    SolverConfig plain;
    plain.robust_points = false;
    const SolverReport q = solve_pose(pts, corner_matches(truth), Vector6::Zero(), plain);
    CHECK(q.final_cost <= q.initial_cost);
  }
}

TEST_CASE("solve_pose: scaling alpha equals scaling plane weights") {
  std::mt19937_64 rng(73);
  const PoseSE3 truth = test::random_pose(rng, 60.0, 0.08);
  const auto pts = point_matches(truth, 30, rng, true);
  const auto planes = corner_matches(truth);
  const double c = 4.0;
  SolverConfig scaled;
  scaled.alpha = c * 10.0;
  auto heavier = planes;
  for (auto& m : heavier) {
    m.prev.covariance /= c;
    m.curr.covariance /= c;
  }
  const SolverReport a = solve_pose(pts, planes, Vector6::Zero(), scaled);
  const SolverReport b = solve_pose(pts, heavier, Vector6::Zero());
  REQUIRE(a.iterates.size() == b.iterates.size());
  for (std::size_t i = 0; i < a.iterates.size(); ++i)
    CHECK((a.iterates[i] - b.iterates[i]).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("solve_pose: alpha zero ignores planes") {
  std::mt19937_64 rng(74);
  const PoseSE3 truth = small_pose(rng);
  const auto pts = point_matches(truth, 30, rng, true);
  auto planes = corner_matches(truth);
  for (auto& m : planes) m.curr.d -= 40.0;  // inconsistent planes
  SolverConfig config;
  config.alpha = 0.0;
  const SolverReport with = solve_pose(pts, planes, Vector6::Zero(), config);
  const SolverReport without = solve_pose(pts, {}, Vector6::Zero(), config);
  CHECK((with.pose.matrix() - without.pose.matrix()).norm() < 1e-12);
}

TEST_CASE("solve_pose: pose covariance is PSD and grows with fewer matches") {
  std::mt19937_64 rng(75);
  const PoseSE3 truth = small_pose(rng);
  const auto pts = point_matches(truth, 80, rng, true);
  const SolverReport full = solve_pose(pts, {}, Vector6::Zero());
  const SolverReport half = solve_pose(std::vector<PointMatch>(pts.begin(), pts.begin() + 40), {}, Vector6::Zero());
  REQUIRE(full.covariance);
  REQUIRE(half.covariance);
  CHECK(is_symmetric_psd(*full.covariance));
  CHECK(is_symmetric_psd(*half.covariance));
  Eigen::SelfAdjointEigenSolver<Matrix6> ef(*full.covariance), eh(*half.covariance);
  CHECK(eh.eigenvalues().maxCoeff() > ef.eigenvalues().maxCoeff());
  CHECK(full.pose.covariance);
}

TEST_CASE("solve_pose: include_pose_covariance still converges") {
  std::mt19937_64 rng(76);
  const PoseSE3 truth = small_pose(rng);
  const auto pts = point_matches(truth, 50, rng, true);
  SolverConfig config;
  config.include_pose_covariance = true;
  const SolverReport r = solve_pose(pts, corner_matches(truth), Vector6::Zero(), config);
  CHECK(r.fallback_used == Fallback::none);
  CHECK(translation_error(r.pose, truth) < 5.0);
  CHECK(rotation_error(r.pose, truth) < 0.005);
}

TEST_CASE("SolverConfig validation") {
  SolverConfig c;
  CHECK_NOTHROW(c.validate());
  c.alpha = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.velocity_decay = 2.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.max_iterations = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK(to_string(Fallback::decayed_velocity_covariance_gate) == "decayed_velocity_covariance_gate");
}
