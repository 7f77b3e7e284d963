#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pvo/association.hpp"
#include "pvo/backprojection.hpp"
#include "pvo/dataset_io.hpp"
#include "pvo/features.hpp"
#include "pvo/frame.hpp"
#include "pvo/plane_extraction.hpp"
#include "pvo/pose_solver.hpp"
#include "pvo/synthetic.hpp"

namespace pvo {

enum class Mode { points_only, planes_only, points_and_planes };

std::string to_string(Mode mode);
std::string to_string(Weighting weighting);
Mode parse_mode(const std::string& text);
Weighting parse_weighting(const std::string& text);

struct RunConfig {
  Mode mode = Mode::points_and_planes;
  std::uint64_t seed = 1;
  SolverConfig solver;
  PlaneExtractionConfig planes;
  FeatureConfig features;
  MatchConfig matching;
  NoiseModel noise;
  /// Dataset camera; TUM fr1 defaults are close to the generic Kinect values.
  CameraIntrinsics intrinsics;

  // Synthetic runs.
  int frames = 100;
  double rate_hz = 30.0;
  double translation_amplitude_mm = 150.0;
  double rotation_amplitude_rad = 0.07;
  bool synthetic_noise = true;
  /// Landmark count override for the fixture (-1 keeps its default).
  int landmarks = -1;
  /// Pixel noise on injected features when synthetic noise is on.
  double feature_pixel_sigma = 0.5;

  // Dataset runs.
  /// Read <rgb>.feat keypoint files when present instead of detecting.
  bool use_feature_sidecars = true;
  /// Stop after this many associated frames (0 = all).
  int max_frames = 0;

  double rpe_interval_s = 1.0;

  /// Applies one "key = value" setting; throws std::invalid_argument for
  /// unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Every key with its current value, one "key = value" per line.
  std::string dump() const;
  void validate() const;
};

/// Reads "key = value" lines ('#' starts a comment) into `config`.
void load_config(std::istream& in, RunConfig& config);
void load_config(const std::filesystem::path& path, RunConfig& config);

/// Keeps the last frame and the motion estimate; pose() is camera-to-world
/// relative to the first frame.
class Odometry {
 public:
  explicit Odometry(RunConfig config);

  /// Returns nullopt for the first frame, otherwise the step report.
  std::optional<SolverReport> process(Frame frame);
  const PoseSE3& pose() const { return world_from_camera_; }

 private:
  RunConfig config_;
  std::optional<Frame> prev_;
  Vector6 velocity_ = Vector6::Zero();
  PoseSE3 world_from_camera_;
};

/// Per-frame input for a synthetic scene: rendered depth for planes and
/// injected ground-truth features for points.
Frame synthetic_frame(const SyntheticScene& scene, std::size_t index, const RunConfig& config);

/// Dataset frame from an RGB/depth pair. Keypoints take the depth of their
/// nearest pixel.
Frame dataset_frame(const SequenceManifest& manifest, const AssociatedPair& pair, const RunConfig& config);

struct RunResult {
  TrajectoryEstimate estimate;
  std::vector<TimedPose> groundtruth;
  std::optional<RpeResult> rpe;
  /// Frame-to-frame ground-truth motion (prev to curr camera), one per step.
  std::vector<PoseSE3> true_steps;
  /// Estimated frame-to-frame motion, one per step.
  std::vector<PoseSE3> estimated_steps;
};

RunResult run_synthetic(const SyntheticScene& scene, const RunConfig& config);
/// Frames for every trajectory pose. Solver settings, alpha and the mode
/// filter do not enter, so one set serves runs that differ only in those
/// (generate with points_and_planes to cover every mode).
std::vector<Frame> synthetic_frames(const SyntheticScene& scene, const RunConfig& config);
RunResult run_synthetic(const SyntheticScene& scene, const std::vector<Frame>& frames, const RunConfig& config);
RunResult run_dataset(const std::filesystem::path& directory, const RunConfig& config);

/// Fraction of steps whose solver fell back to the velocity model.
double fallback_fraction(const RunResult& result);
/// Translation error |t_est - t_true| (mm) of each frame-to-frame step.
std::vector<double> step_translation_errors(const RunResult& result);
std::vector<double> step_rotation_errors(const RunResult& result);

/// Writes trajectory.txt, diagnostics.csv, rpe.txt (with ground truth) and
/// config.txt into `output_dir`.
void write_run_outputs(const RunResult& result, const RunConfig& config, const std::filesystem::path& output_dir);
void write_diagnostics(const RunResult& result, std::ostream& out);

/// A run input: a fixture name or a scene file, or a TUM sequence directory.
struct RunSource {
  std::optional<SyntheticScene> scene;
  std::optional<std::filesystem::path> dataset;

  static RunSource resolve(const std::string& input, const RunConfig& config);
};

RunResult run_odometry(const RunSource& source, const RunConfig& config);

/// Writes `scene` as a TUM-style sequence: 16-bit depth PNGs (5000 units per
/// metre), 8-bit gray images with a blocky texture on every plane, rgb.txt,
/// depth.txt and groundtruth.txt.
void write_tum_sequence(const SyntheticScene& scene, const std::filesystem::path& directory, std::uint64_t seed);

struct AlphaRow {
  double alpha = 0.0;
  std::optional<RpeResult> rpe;
  std::string error;
};

/// One run per alpha; failures are recorded per row and the sweep continues.
std::vector<AlphaRow> sweep_alpha(const RunSource& source, const std::vector<double>& alphas, const RunConfig& config);
void write_alpha_csv(const std::vector<AlphaRow>& rows, std::ostream& out);

}  // namespace pvo
