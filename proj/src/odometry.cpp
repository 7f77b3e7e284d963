#include "pvo/odometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pvo {
namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("bad value for " + key + ": '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw std::invalid_argument("bad value for " + key + ": '" + text + "'");
}

// Shortest text that reads back to the same double.
std::string show(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Field number(std::string key, Access access) {
  return {key,
          [key, access](RunConfig& c, const std::string& v) { access(c) = parse_number<T>(key, v); },
          [access](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return show(access(const_cast<RunConfig&>(c)));
            else
              return std::to_string(access(const_cast<RunConfig&>(c)));
          }};
}

template <typename Access>
Field flag(std::string key, Access access) {
  return {key, [key, access](RunConfig& c, const std::string& v) { access(c) = parse_bool(key, v); },
          [access](const RunConfig& c) -> std::string {
            return access(const_cast<RunConfig&>(c)) ? "true" : "false";
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"mode", [](RunConfig& c, const std::string& v) { c.mode = parse_mode(v); },
                 [](const RunConfig& c) { return to_string(c.mode); }});
    f.push_back({"weighting", [](RunConfig& c, const std::string& v) { c.solver.weighting = parse_weighting(v); },
                 [](const RunConfig& c) { return to_string(c.solver.weighting); }});
    f.push_back(number<double>("alpha", [](RunConfig& c) -> double& { return c.solver.alpha; }));
    f.push_back(number<std::uint64_t>("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));

    f.push_back(number<int>("solver.max_iterations", [](RunConfig& c) -> int& { return c.solver.max_iterations; }));
    f.push_back(number<double>("solver.tukey_c", [](RunConfig& c) -> double& { return c.solver.tukey_c; }));
    f.push_back(number<int>("solver.min_total_matches", [](RunConfig& c) -> int& { return c.solver.min_total_matches; }));
    f.push_back(number<double>("solver.pose_cov_eigen_max", [](RunConfig& c) -> double& { return c.solver.pose_cov_eigen_max; }));
    f.push_back(number<double>("solver.velocity_decay", [](RunConfig& c) -> double& { return c.solver.velocity_decay; }));
    f.push_back(number<double>("solver.lm_lambda_init", [](RunConfig& c) -> double& { return c.solver.lm_lambda_init; }));
    f.push_back(number<double>("solver.lm_lambda_factor", [](RunConfig& c) -> double& { return c.solver.lm_lambda_factor; }));
    f.push_back(flag("solver.robust_points", [](RunConfig& c) -> bool& { return c.solver.robust_points; }));
    f.push_back(flag("solver.include_pose_covariance", [](RunConfig& c) -> bool& { return c.solver.include_pose_covariance; }));
    f.push_back(number<double>("solver.w_min", [](RunConfig& c) -> double& { return c.solver.w_min; }));
    f.push_back(number<double>("solver.w_max", [](RunConfig& c) -> double& { return c.solver.w_max; }));

    f.push_back(number<int>("planes.cell_size", [](RunConfig& c) -> int& { return c.planes.cell_size; }));
    f.push_back(number<double>("planes.cell_min_valid_fraction", [](RunConfig& c) -> double& { return c.planes.cell_min_valid_fraction; }));
    f.push_back(number<double>("planes.merge_angle_deg", [](RunConfig& c) -> double& { return c.planes.merge_angle_deg; }));
    f.push_back(number<double>("planes.merge_distance_mm", [](RunConfig& c) -> double& { return c.planes.merge_distance_mm; }));
    f.push_back(number<double>("planes.segment_rms_threshold_mm", [](RunConfig& c) -> double& { return c.planes.segment_rms_threshold_mm; }));
    f.push_back(number<std::size_t>("planes.min_segment_size", [](RunConfig& c) -> std::size_t& { return c.planes.min_segment_size; }));
    f.push_back(number<double>("planes.inlier_threshold_mm", [](RunConfig& c) -> double& { return c.planes.inlier_threshold_mm; }));
    f.push_back(number<double>("planes.min_inlier_fraction", [](RunConfig& c) -> double& { return c.planes.min_inlier_fraction; }));
    f.push_back(number<int>("planes.ransac_max_iterations", [](RunConfig& c) -> int& { return c.planes.ransac_max_iterations; }));
    f.push_back(number<double>("planes.ransac_confidence", [](RunConfig& c) -> double& { return c.planes.ransac_confidence; }));
    f.push_back(number<std::size_t>("planes.max_fit_points", [](RunConfig& c) -> std::size_t& { return c.planes.max_fit_points; }));
    f.push_back(number<double>("planes.fit_length_unit_mm", [](RunConfig& c) -> double& { return c.planes.fit_length_unit_mm; }));

    f.push_back(number<std::size_t>("features.max_features", [](RunConfig& c) -> std::size_t& { return c.features.max_features; }));
    f.push_back(number<double>("features.min_response", [](RunConfig& c) -> double& { return c.features.min_response; }));
    f.push_back(number<double>("features.relative_response", [](RunConfig& c) -> double& { return c.features.relative_response; }));
    f.push_back(number<int>("features.nms_radius", [](RunConfig& c) -> int& { return c.features.nms_radius; }));
    f.push_back(number<int>("features.patch_radius", [](RunConfig& c) -> int& { return c.features.patch_radius; }));
    f.push_back(flag("features.oriented", [](RunConfig& c) -> bool& { return c.features.oriented; }));

    f.push_back(number<int>("matching.k", [](RunConfig& c) -> int& { return c.matching.k; }));
    f.push_back(number<double>("matching.radius_px", [](RunConfig& c) -> double& { return c.matching.radius_px; }));
    f.push_back(number<double>("matching.max_descriptor_distance", [](RunConfig& c) -> double& { return c.matching.max_descriptor_distance; }));
    f.push_back(number<double>("matching.min_overlap", [](RunConfig& c) -> double& { return c.matching.min_overlap; }));
    f.push_back(number<double>("matching.max_angle_deg", [](RunConfig& c) -> double& { return c.matching.max_angle_deg; }));
    f.push_back(number<double>("matching.max_d_difference_mm", [](RunConfig& c) -> double& { return c.matching.max_d_difference_mm; }));

    f.push_back(number<double>("noise.sigma_p", [](RunConfig& c) -> double& { return c.noise.sigma_p; }));
    f.push_back(number<double>("noise.depth_sigma_coeff", [](RunConfig& c) -> double& { return c.noise.depth_sigma_coeff; }));
    f.push_back(number<double>("noise.min_depth_mm", [](RunConfig& c) -> double& { return c.noise.min_depth_mm; }));
    f.push_back(number<double>("noise.max_depth_mm", [](RunConfig& c) -> double& { return c.noise.max_depth_mm; }));

    f.push_back(number<double>("camera.fx", [](RunConfig& c) -> double& { return c.intrinsics.fx; }));
    f.push_back(number<double>("camera.fy", [](RunConfig& c) -> double& { return c.intrinsics.fy; }));
    f.push_back(number<double>("camera.cx", [](RunConfig& c) -> double& { return c.intrinsics.cx; }));
    f.push_back(number<double>("camera.cy", [](RunConfig& c) -> double& { return c.intrinsics.cy; }));
    f.push_back(number<double>("camera.depth_scale", [](RunConfig& c) -> double& { return c.intrinsics.depth_scale; }));

    f.push_back(number<int>("synthetic.frames", [](RunConfig& c) -> int& { return c.frames; }));
    f.push_back(number<double>("synthetic.rate_hz", [](RunConfig& c) -> double& { return c.rate_hz; }));
    f.push_back(number<double>("synthetic.translation_amplitude_mm", [](RunConfig& c) -> double& { return c.translation_amplitude_mm; }));
    f.push_back(number<double>("synthetic.rotation_amplitude_rad", [](RunConfig& c) -> double& { return c.rotation_amplitude_rad; }));
    f.push_back(flag("synthetic.noise", [](RunConfig& c) -> bool& { return c.synthetic_noise; }));
    f.push_back(number<int>("synthetic.landmarks", [](RunConfig& c) -> int& { return c.landmarks; }));
    f.push_back(number<double>("synthetic.feature_pixel_sigma", [](RunConfig& c) -> double& { return c.feature_pixel_sigma; }));

    f.push_back(flag("dataset.use_feature_sidecars", [](RunConfig& c) -> bool& { return c.use_feature_sidecars; }));
    f.push_back(number<int>("dataset.max_frames", [](RunConfig& c) -> int& { return c.max_frames; }));
    f.push_back(number<double>("rpe.interval_s", [](RunConfig& c) -> double& { return c.rpe_interval_s; }));
    return f;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

PoseSE3 strip_covariance(PoseSE3 pose) {
  pose.covariance.reset();
  return pose;
}

}  // namespace

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::points_only: return "points_only";
    case Mode::planes_only: return "planes_only";
    case Mode::points_and_planes: return "points_and_planes";
  }
  return "unknown";
}

std::string to_string(Weighting weighting) {
  return weighting == Weighting::probabilistic ? "probabilistic" : "deterministic";
}

Mode parse_mode(const std::string& text) {
  if (text == "points_only") return Mode::points_only;
  if (text == "planes_only") return Mode::planes_only;
  if (text == "points_and_planes") return Mode::points_and_planes;
  throw std::invalid_argument("unknown mode: " + text);
}

Weighting parse_weighting(const std::string& text) {
  if (text == "probabilistic") return Weighting::probabilistic;
  if (text == "deterministic") return Weighting::deterministic;
  throw std::invalid_argument("unknown weighting: " + text);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields())
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  throw std::invalid_argument("unknown config key: " + key);
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  solver.validate();
  noise.validate();
  intrinsics.validate();
  if (frames < 2) throw std::invalid_argument("synthetic.frames must be >= 2");
  if (!(rate_hz > 0.0)) throw std::invalid_argument("synthetic.rate_hz must be > 0");
  if (!(rpe_interval_s > 0.0)) throw std::invalid_argument("rpe.interval_s must be > 0");
  if (feature_pixel_sigma < 0.0) throw std::invalid_argument("synthetic.feature_pixel_sigma must be >= 0");
}

void load_config(std::istream& in, RunConfig& config) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void load_config(const std::filesystem::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  load_config(in, config);
}

Odometry::Odometry(RunConfig config) : config_(std::move(config)) { config_.validate(); }

std::optional<SolverReport> Odometry::process(Frame frame) {
  if (config_.mode == Mode::points_only) frame.planes.clear();
  if (config_.mode == Mode::planes_only) frame.points.clear();
  if (!prev_) {
    prev_ = std::move(frame);
    return std::nullopt;
  }
  const auto points = match_points(*prev_, frame, config_.matching);
  std::vector<PlaneMatch> planes;
  // alpha = 0 removes the plane term, so plane matches are not counted either.
  if (config_.solver.alpha > 0.0) planes = match_planes(*prev_, frame, config_.matching);

  SolverReport report = solve_pose(points, planes, velocity_, config_.solver);
  const PoseSE3 step = strip_covariance(report.pose);
  velocity_ = se3_log(step);
  world_from_camera_ = world_from_camera_ * step.inverse();
  prev_ = std::move(frame);
  return report;
}

Frame synthetic_frame(const SyntheticScene& scene, std::size_t index, const RunConfig& config) {
  const TimedPose& tp = scene.trajectory.at(index);
  Frame frame;
  frame.timestamp = tp.timestamp;
  frame.intrinsics = scene.intrinsics;

  if (config.mode != Mode::points_only) {
    const DepthImage depth = render_depth(scene, tp.pose, frame_seed(config.seed, index, 1), tp.timestamp);
    frame.planes = extract_planes(OrganizedCloud::from_depth(depth, config.noise), config.planes);
  }
  if (config.mode != Mode::planes_only) {
    InjectionNoise noise;
    noise.pixel_sigma = scene.noise_enabled ? config.feature_pixel_sigma : 0.0;
    noise.seed = frame_seed(config.seed, index, 2);
    std::mt19937_64 rng(frame_seed(config.seed, index, 3));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (const auto& kp : inject_ground_truth(scene, tp.pose, noise)) {
      const auto z = ray_depth(scene, tp.pose, kp.pixel);
      if (!z) continue;
      double value = *z;
      if (scene.noise_enabled) value += depth_sigma(*z, scene.noise) * gauss(rng);
      if (value < config.noise.min_depth_mm || value > config.noise.max_depth_mm) continue;
      Point3WithCov p = backproject_with_cov(kp.pixel, value, scene.intrinsics, config.noise);
      p.descriptor = kp.descriptor;
      p.id = kp.id;
      frame.points.push_back(std::move(p));
    }
  }
  return frame;
}

Frame dataset_frame(const SequenceManifest& manifest, const AssociatedPair& pair, const RunConfig& config) {
  Frame frame;
  frame.timestamp = pair.rgb.timestamp;
  const DepthImage depth = load_depth_png(manifest.directory / pair.depth.file, config.intrinsics);
  frame.intrinsics = depth.intrinsics;

  if (config.mode != Mode::points_only)
    frame.planes = extract_planes(OrganizedCloud::from_depth(depth, config.noise), config.planes);
  if (config.mode != Mode::planes_only) {
    const auto rgb_path = manifest.directory / pair.rgb.file;
    const auto sidecar = sidecar_path(rgb_path);
    std::vector<Keypoint> keypoints;
    if (config.use_feature_sidecars && std::filesystem::exists(sidecar))
      keypoints = read_keypoints(sidecar);
    else
      keypoints = detect_and_describe(load_gray_png(rgb_path), config.features);
    for (const auto& kp : keypoints) {
      const int c = static_cast<int>(std::lround(kp.pixel.x()));
      const int r = static_cast<int>(std::lround(kp.pixel.y()));
      if (r < 0 || c < 0 || r >= depth.rows || c >= depth.cols) continue;
      const auto z = depth.depth_mm(r, c, config.noise);
      if (!z) continue;
      Point3WithCov p = backproject_with_cov(kp.pixel, *z, frame.intrinsics, config.noise);
      p.descriptor = kp.descriptor;
      frame.points.push_back(std::move(p));
    }
  }
  return frame;
}

namespace {

void finish_rpe(RunResult& result, const RunConfig& config) {
  if (result.groundtruth.empty()) return;
  try {
    result.rpe = relative_pose_error(result.estimate.poses, result.groundtruth, config.rpe_interval_s);
  } catch (const DatasetError&) {
    result.rpe.reset();
  }
}

}  // namespace

RunResult run_synthetic(const SyntheticScene& scene, const RunConfig& config) {
  return run_synthetic(scene, synthetic_frames(scene, config), config);
}

std::vector<Frame> synthetic_frames(const SyntheticScene& scene, const RunConfig& config) {
  std::vector<Frame> frames;
  frames.reserve(scene.trajectory.size());
  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) frames.push_back(synthetic_frame(scene, i, config));
  return frames;
}

RunResult run_synthetic(const SyntheticScene& scene, const std::vector<Frame>& frames, const RunConfig& config) {
  if (scene.trajectory.size() < 2) throw std::invalid_argument("scene trajectory needs at least 2 poses");
  if (frames.size() != scene.trajectory.size())
    throw std::invalid_argument("run_synthetic: one frame per trajectory pose expected");
  RunResult result;
  Odometry odometry(config);
  const PoseSE3 origin_inv = scene.trajectory.front().pose.inverse();
  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
    const auto& tp = scene.trajectory[i];
    auto report = odometry.process(frames[i]);
    result.estimate.poses.push_back({tp.timestamp, odometry.pose()});
    result.groundtruth.push_back({tp.timestamp, origin_inv * tp.pose});
    if (report) {
      result.estimated_steps.push_back(strip_covariance(report->pose));
      result.true_steps.push_back(tp.pose.inverse() * scene.trajectory[i - 1].pose);
      result.estimate.reports.push_back(std::move(*report));
    }
  }
  finish_rpe(result, config);
  return result;
}

RunResult run_dataset(const std::filesystem::path& directory, const RunConfig& config) {
  const SequenceManifest manifest = load_sequence(directory);
  if (manifest.associations.size() < 2) throw DatasetError("sequence has fewer than 2 associated frames");
  RunResult result;
  result.groundtruth = manifest.groundtruth;
  Odometry odometry(config);
  std::size_t count = 0;
  for (const auto& pair : manifest.associations) {
    if (config.max_frames > 0 && count >= static_cast<std::size_t>(config.max_frames)) break;
    ++count;
    auto report = odometry.process(dataset_frame(manifest, pair, config));
    result.estimate.poses.push_back({pair.rgb.timestamp, odometry.pose()});
    if (report) {
      result.estimated_steps.push_back(strip_covariance(report->pose));
      result.estimate.reports.push_back(std::move(*report));
    }
  }
  finish_rpe(result, config);
  return result;
}

double fallback_fraction(const RunResult& result) {
  const auto& reports = result.estimate.reports;
  if (reports.empty()) return 0.0;
  const auto n = std::count_if(reports.begin(), reports.end(),
                               [](const SolverReport& r) { return r.fallback_used != Fallback::none; });
  return static_cast<double>(n) / static_cast<double>(reports.size());
}

std::vector<double> step_translation_errors(const RunResult& result) {
  std::vector<double> out;
  for (std::size_t i = 0; i < std::min(result.true_steps.size(), result.estimated_steps.size()); ++i)
    out.push_back((result.estimated_steps[i].translation - result.true_steps[i].translation).norm());
  return out;
}

std::vector<double> step_rotation_errors(const RunResult& result) {
  std::vector<double> out;
  for (std::size_t i = 0; i < std::min(result.true_steps.size(), result.estimated_steps.size()); ++i)
    out.push_back(rotation_angle(result.true_steps[i].rotation.transpose() * result.estimated_steps[i].rotation));
  return out;
}

void write_diagnostics(const RunResult& result, std::ostream& out) {
  out << "frame_index,timestamp,n_point_matches,n_plane_matches,iterations,fallback,cost\n";
  const auto& reports = result.estimate.reports;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    std::ostringstream cost;
    cost.precision(9);
    cost << r.final_cost;
    out << (i + 1) << ',' << format_fixed6(result.estimate.poses[i + 1].timestamp) << ',' << r.point_match_count << ','
        << r.plane_match_count << ',' << r.iterations << ',' << to_string(r.fallback_used) << ',' << cost.str()
        << '\n';
  }
}

void write_run_outputs(const RunResult& result, const RunConfig& config, const std::filesystem::path& output_dir) {
  std::filesystem::create_directories(output_dir);
  write_trajectory(result.estimate, output_dir / "trajectory.txt");
  {
    std::ofstream out(output_dir / "diagnostics.csv");
    if (!out) throw std::runtime_error("cannot write diagnostics.csv");
    write_diagnostics(result, out);
  }
  {
    std::ofstream out(output_dir / "config.txt");
    out << config.dump();
  }
  if (!result.groundtruth.empty()) {
    TrajectoryEstimate gt;
    gt.poses = result.groundtruth;
    write_trajectory(gt, output_dir / "groundtruth.txt");
  }
  if (result.rpe) {
    std::ofstream out(output_dir / "rpe.txt");
    write_rpe_report(*result.rpe, out);
  }
}

RunSource RunSource::resolve(const std::string& input, const RunConfig& config) {
  RunSource source;
  if (input == "corner3" || input == "wall+points" || input == "wall_points" || input == "notexture") {
    FixtureOptions options;
    options.motion.frames = config.frames;
    options.motion.rate_hz = config.rate_hz;
    options.motion.translation_amplitude_mm = config.translation_amplitude_mm;
    options.motion.rotation_amplitude_rad = config.rotation_amplitude_rad;
    options.motion.seed = config.seed;
    options.noise = config.synthetic_noise;
    options.seed = config.seed;
    options.landmarks = config.landmarks;
    source.scene = make_fixture(input, options);
    source.scene->noise = config.noise;
  } else if (std::filesystem::is_directory(input)) {
    source.dataset = input;
  } else if (std::filesystem::is_regular_file(input)) {
    source.scene = read_scene(std::filesystem::path(input));
  } else {
    throw std::invalid_argument("input is neither a fixture name, a scene file nor a directory: " + input);
  }
  return source;
}

RunResult run_odometry(const RunSource& source, const RunConfig& config) {
  if (source.scene) return run_synthetic(*source.scene, config);
  if (source.dataset) return run_dataset(*source.dataset, config);
  throw std::invalid_argument("empty run source");
}

void write_tum_sequence(const SyntheticScene& scene, const std::filesystem::path& directory, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(directory / "rgb");
  fs::create_directories(directory / "depth");
  std::ofstream rgb_list(directory / "rgb.txt"), depth_list(directory / "depth.txt");
  if (!rgb_list || !depth_list) throw std::runtime_error("cannot write sequence lists in " + directory.string());
  rgb_list << "# color images\n# timestamp filename\n";
  depth_list << "# depth maps\n# timestamp filename\n";

  const auto& k = scene.intrinsics;
  constexpr double kCell = 80.0;
  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) {
    const TimedPose& tp = scene.trajectory[i];
    const DepthImage depth = render_depth(scene, tp.pose, frame_seed(seed, i, 1), tp.timestamp);
    PngImage depth_png{k.width, k.height, 1, 16, {}};
    depth_png.samples.resize(static_cast<std::size_t>(k.width) * k.height);
    for (std::size_t j = 0; j < depth_png.samples.size(); ++j)
      depth_png.samples[j] = static_cast<std::uint16_t>(std::clamp(std::lround(depth.raw[j] * 5.0), 0L, 65535L));

    PngImage gray{k.width, k.height, 1, 8, std::vector<std::uint16_t>(depth_png.samples.size(), 0)};
    for (int r = 0; r < k.height; ++r) {
      for (int c = 0; c < k.width; ++c) {
        const Vector3 ray((c - k.cx) / k.fx, (r - k.cy) / k.fy, 1.0);
        const Vector3 dir = tp.pose.rotation * ray;
        double best = std::numeric_limits<double>::infinity();
        std::uint16_t value = 0;
        for (const auto& plane : scene.planes) {
          const Vector3 n = plane.normal();
          const double denom = n.dot(dir);
          if (std::abs(denom) < 1e-12) continue;
          const double t = n.dot(plane.origin - tp.pose.translation) / denom;
          if (!(t > 0.0) || t >= best) continue;
          const Vector3 rel = tp.pose.translation + t * dir - plane.origin;
          const double s = plane.axis_u.dot(rel), q = plane.axis_v.dot(rel);
          if (s < 0.0 || s > plane.extent_u || q < 0.0 || q > plane.extent_v) continue;
          best = t;
          const auto cell = frame_seed(static_cast<std::uint64_t>(plane.id),
                                       static_cast<std::uint64_t>(std::floor(s / kCell)) * 65536u +
                                           static_cast<std::uint64_t>(std::floor(q / kCell)));
          value = static_cast<std::uint16_t>(40 + cell % 176);
        }
        gray.samples[static_cast<std::size_t>(r) * k.width + c] = value;
      }
    }

    char name[64];
    std::snprintf(name, sizeof name, "%.6f.png", tp.timestamp + 1.0);
    write_png(directory / "depth" / name, depth_png);
    write_png(directory / "rgb" / name, gray);
    rgb_list << format_fixed6(tp.timestamp + 1.0) << " rgb/" << name << '\n';
    depth_list << format_fixed6(tp.timestamp + 1.0) << " depth/" << name << '\n';
  }

  std::ofstream gt(directory / "groundtruth.txt");
  gt << "# ground truth trajectory\n# timestamp tx ty tz qx qy qz qw\n";
  TrajectoryEstimate poses;
  for (const auto& tp : scene.trajectory) poses.poses.push_back({tp.timestamp + 1.0, tp.pose});
  write_trajectory(poses, gt);
}

std::vector<AlphaRow> sweep_alpha(const RunSource& source, const std::vector<double>& alphas, const RunConfig& config) {
  std::vector<AlphaRow> rows;
  // Synthetic frames do not depend on alpha; build them once.
  std::optional<std::vector<Frame>> frames;
  for (double alpha : alphas) {
    AlphaRow row;
    row.alpha = alpha;
    try {
      RunConfig c = config;
      c.solver.alpha = alpha;
      c.validate();
      if (source.scene && !frames) frames = synthetic_frames(*source.scene, c);
      const RunResult result = frames ? run_synthetic(*source.scene, *frames, c) : run_odometry(source, c);
      if (result.rpe)
        row.rpe = result.rpe;
      else
        row.error = "no ground truth overlap";
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_alpha_csv(const std::vector<AlphaRow>& rows, std::ostream& out) {
  out << "alpha,rpe_translation_m,rpe_rotation_deg,error\n";
  for (const auto& row : rows) {
    out << show(row.alpha) << ',';
    if (row.rpe)
      out << format_fixed6(row.rpe->translation_rmse_mm / 1000.0) << ',' << format_fixed6(row.rpe->rotation_rmse_deg);
    else
      out << ',';
    std::string error = row.error;
    std::replace(error.begin(), error.end(), ',', ';');
    out << ',' << error << '\n';
  }
}

}  // namespace pvo
