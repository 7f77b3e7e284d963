#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pvo/backprojection.hpp"
#include "pvo/features.hpp"
#include "pvo/geometry.hpp"
#include "pvo/pose_solver.hpp"
#include "pvo/synthetic.hpp"

namespace pvo {

struct StampedFile {
  double timestamp = 0.0;
  /// As written in the list file, relative to the sequence directory.
  std::string file;
};

struct AssociatedPair {
  StampedFile rgb;
  StampedFile depth;
};

/// TUM RGB-D sequence listing. Ground-truth poses are camera-to-world with
/// translations in mm.
struct SequenceManifest {
  std::filesystem::path directory;
  std::vector<StampedFile> rgb;
  std::vector<StampedFile> depth;
  std::vector<TimedPose> groundtruth;
  std::vector<AssociatedPair> associations;
  std::size_t dropped = 0;
  std::vector<std::string> warnings;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads rgb.txt, depth.txt and (if present) groundtruth.txt, then pairs
/// every RGB frame with the nearest depth frame within `max_dt` seconds,
/// one-to-one, closest pairs first.
SequenceManifest load_sequence(const std::filesystem::path& directory, double max_dt = 0.02);

/// "timestamp tx ty tz qx qy qz qw" records in metres; returns mm poses.
/// Quaternions are normalized; records whose norm is off by more than 1e-2
/// are rejected.
std::vector<TimedPose> read_trajectory(const std::filesystem::path& path);
std::vector<TimedPose> read_trajectory(std::istream& in, const std::string& name = "<stream>");

struct TrajectoryEstimate {
  std::vector<TimedPose> poses;
  std::vector<SolverReport> reports;
};

/// One line per pose in metres with at most 6 decimals (trailing zeros
/// trimmed, so the identity prints as "t 0 0 0 0 0 0 1").
void write_trajectory(const TrajectoryEstimate& trajectory, std::ostream& out);
void write_trajectory(const TrajectoryEstimate& trajectory, const std::filesystem::path& path);
std::string format_fixed6(double value);

struct RpeResult {
  double translation_rmse_mm = 0.0;
  double rotation_rmse_deg = 0.0;
  std::size_t pairs = 0;
};

/// Relative pose error over `interval` seconds for every estimate start
/// frame. Ground truth is looked up by nearest timestamp within `max_dt`.
/// Throws DatasetError when no pair can be formed.
RpeResult relative_pose_error(const std::vector<TimedPose>& estimate, const std::vector<TimedPose>& groundtruth,
                              double interval = 1.0, double max_dt = 0.02);

/// "metric value unit" table.
void write_rpe_report(const RpeResult& rpe, std::ostream& out);

// PNG access.

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  int bit_depth = 8;
  /// Interleaved samples, row-major.
  std::vector<std::uint16_t> samples;
};

PngImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const PngImage& image);

/// 16-bit single-channel depth PNG; raw values are kept, depth_mm() applies
/// intrinsics.depth_scale. Other formats are rejected.
DepthImage load_depth_png(const std::filesystem::path& path, const CameraIntrinsics& intrinsics);
/// 8-bit gray, RGB or RGBA PNG converted to luminance.
GrayImage load_gray_png(const std::filesystem::path& path);

}  // namespace pvo
