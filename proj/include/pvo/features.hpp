#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "pvo/geometry.hpp"
#include "pvo/synthetic.hpp"

namespace pvo {

struct Keypoint {
  Vector2 pixel = Vector2::Zero();
  std::vector<float> descriptor;
  double response = 0.0;
  /// Landmark identity for injected ground-truth features, -1 otherwise.
  std::int64_t id = -1;
};

/// Single-channel intensity image, row-major, values nominally in [0, 255].
struct GrayImage {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int rows_, int cols_, float fill = 0.0f)
      : rows(rows_), cols(cols_), data(static_cast<std::size_t>(rows_) * cols_, fill) {}

  float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  bool empty() const { return data.empty(); }
};

struct FeatureConfig {
  std::size_t max_features = 800;
  /// Minimum eigenvalue of the 5x5 structure tensor, (intensity/px)^2 summed.
  double min_response = 50.0;
  /// Responses below this fraction of the frame maximum are discarded.
  double relative_response = 0.01;
  int nms_radius = 3;
  int patch_radius = 12;
  /// The descriptor samples a grid x grid lattice over the patch.
  int descriptor_grid = 8;
  /// Rotate each patch to its intensity-centroid angle. Off by default: with
  /// small inter-frame rotation an upright patch is more discriminative.
  bool oriented = false;
};

/// Corner detector (structure-tensor minimum eigenvalue, non-maximum
/// suppression, sub-pixel peak) with an oriented intensity-patch descriptor
/// (zero mean, unit L2 norm). Output sorted by decreasing response.
std::vector<Keypoint> detect_and_describe(const GrayImage& image, const FeatureConfig& config = {});

/// Descriptor at `pixel` for the given patch orientation (radians).
std::vector<float> describe_at(const GrayImage& image, const Vector2& pixel, double angle,
                               const FeatureConfig& config = {});

/// Patch orientation from the intensity centroid.
double patch_orientation(const GrayImage& image, const Vector2& pixel, int radius);

double descriptor_distance(const std::vector<float>& a, const std::vector<float>& b);

/// Sidecar format: one keypoint per line, "u v response d_1 ... d_k".
void write_keypoints(const std::vector<Keypoint>& keypoints, const std::filesystem::path& path);
std::vector<Keypoint> read_keypoints(const std::filesystem::path& path);
/// <rgb_path without extension>.feat
std::filesystem::path sidecar_path(const std::filesystem::path& rgb_path);

struct InjectionNoise {
  double pixel_sigma = 0.0;
  std::uint64_t seed = 1;
};

/// Unit descriptor derived deterministically from a landmark ID. Long enough
/// that distinct IDs stay near-orthogonal (distance close to sqrt(2)).
std::vector<float> landmark_descriptor(std::int64_t id, int length = 128);

/// Projects the scene's landmarks into the camera at `camera_to_world`.
/// Landmarks behind the camera, outside the image or occluded by a plane are
/// skipped. Each keypoint carries the landmark ID and its ID descriptor; pixels
/// are perturbed by N(0, pixel_sigma^2) per axis.
std::vector<Keypoint> inject_ground_truth(const SyntheticScene& scene, const PoseSE3& camera_to_world,
                                          const InjectionNoise& noise = {});

}  // namespace pvo
