#include "pvo/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pvo {
namespace {

float sample_bilinear(const GrayImage& img, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.cols - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.rows - 1));
  const int x0 = std::min(static_cast<int>(x), img.cols - 2 < 0 ? 0 : img.cols - 2);
  const int y0 = std::min(static_cast<int>(y), img.rows - 2 < 0 ? 0 : img.rows - 2);
  const int x1 = std::min(x0 + 1, img.cols - 1);
  const int y1 = std::min(y0 + 1, img.rows - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const double top = (1.0 - ax) * img.at(y0, x0) + ax * img.at(y0, x1);
  const double bottom = (1.0 - ax) * img.at(y1, x0) + ax * img.at(y1, x1);
  return static_cast<float>((1.0 - ay) * top + ay * bottom);
}

// Separable box sum with a (2*radius+1) window, zero outside.
std::vector<double> box_sum(const std::vector<double>& in, int rows, int cols, int radius) {
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = &in[static_cast<std::size_t>(r) * cols];
    for (int c = 0; c < std::min(radius, cols); ++c) acc += row[c];
    for (int c = 0; c < cols; ++c) {
      if (c + radius < cols) acc += row[c + radius];
      if (c - radius - 1 >= 0) acc -= row[c - radius - 1];
      tmp[static_cast<std::size_t>(r) * cols + c] = acc;
    }
  }
  for (int c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (int r = 0; r < std::min(radius, rows); ++r) acc += tmp[static_cast<std::size_t>(r) * cols + c];
    for (int r = 0; r < rows; ++r) {
      if (r + radius < rows) acc += tmp[static_cast<std::size_t>(r + radius) * cols + c];
      if (r - radius - 1 >= 0) acc -= tmp[static_cast<std::size_t>(r - radius - 1) * cols + c];
      out[static_cast<std::size_t>(r) * cols + c] = acc;
    }
  }
  return out;
}

}  // namespace

double patch_orientation(const GrayImage& image, const Vector2& pixel, int radius) {
  double m01 = 0.0, m10 = 0.0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy > radius * radius) continue;
      const double v = sample_bilinear(image, pixel.x() + dx, pixel.y() + dy);
      m10 += dx * v;
      m01 += dy * v;
    }
  }
  return std::atan2(m01, m10);
}

std::vector<float> describe_at(const GrayImage& image, const Vector2& pixel, double angle,
                               const FeatureConfig& config) {
  const int g = config.descriptor_grid;
  if (g < 2) throw std::invalid_argument("descriptor_grid must be >= 2");
  const double step = 2.0 * config.patch_radius / (g - 1);
  const double c = std::cos(angle), s = std::sin(angle);
  std::vector<float> desc(static_cast<std::size_t>(g) * g);
  double mean = 0.0;
  for (int j = 0; j < g; ++j) {
    for (int i = 0; i < g; ++i) {
      const double ox = -config.patch_radius + i * step;
      const double oy = -config.patch_radius + j * step;
      const float v = sample_bilinear(image, pixel.x() + c * ox - s * oy, pixel.y() + s * ox + c * oy);
      desc[static_cast<std::size_t>(j) * g + i] = v;
      mean += v;
    }
  }
  mean /= static_cast<double>(desc.size());
  double norm2 = 0.0;
  for (auto& v : desc) {
    v = static_cast<float>(v - mean);
    norm2 += static_cast<double>(v) * v;
  }
  const double norm = std::sqrt(norm2);
  if (norm > 1e-9)
    for (auto& v : desc) v = static_cast<float>(v / norm);
  return desc;
}

std::vector<Keypoint> detect_and_describe(const GrayImage& image, const FeatureConfig& config) {
  if (image.empty() || image.rows < 3 || image.cols < 3) throw std::invalid_argument("empty image");
  const int rows = image.rows, cols = image.cols;
  const std::size_t n = static_cast<std::size_t>(rows) * cols;

  // Sobel gradients, normalized to intensity per pixel.
  std::vector<double> gxx(n, 0.0), gyy(n, 0.0), gxy(n, 0.0);
  for (int r = 1; r < rows - 1; ++r) {
    for (int c = 1; c < cols - 1; ++c) {
      auto p = [&](int dr, int dc) { return static_cast<double>(image.at(r + dr, c + dc)); };
      const double gx = (p(-1, 1) + 2 * p(0, 1) + p(1, 1) - p(-1, -1) - 2 * p(0, -1) - p(1, -1)) / 8.0;
      const double gy = (p(1, -1) + 2 * p(1, 0) + p(1, 1) - p(-1, -1) - 2 * p(-1, 0) - p(-1, 1)) / 8.0;
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      gxx[i] = gx * gx;
      gyy[i] = gy * gy;
      gxy[i] = gx * gy;
    }
  }
  const auto sxx = box_sum(gxx, rows, cols, 2);
  const auto syy = box_sum(gyy, rows, cols, 2);
  const auto sxy = box_sum(gxy, rows, cols, 2);

  std::vector<double> response(n, 0.0);
  double max_response = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double tr = 0.5 * (sxx[i] + syy[i]);
    const double det_term = std::sqrt(0.25 * (sxx[i] - syy[i]) * (sxx[i] - syy[i]) + sxy[i] * sxy[i]);
    response[i] = tr - det_term;
    max_response = std::max(max_response, response[i]);
  }
  const double threshold = std::max(config.min_response, config.relative_response * max_response);
  if (max_response < threshold) return {};

  const int border = std::max(config.nms_radius, 3);
  std::vector<Keypoint> out;
  for (int r = border; r < rows - border; ++r) {
    for (int c = border; c < cols - border; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      const double v = response[i];
      if (v < threshold) continue;
      bool is_max = true;
      for (int dr = -config.nms_radius; dr <= config.nms_radius && is_max; ++dr) {
        for (int dc = -config.nms_radius; dc <= config.nms_radius; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const double w = response[static_cast<std::size_t>(r + dr) * cols + (c + dc)];
          // Ties resolve to the first pixel in raster order.
          if (w > v || (w == v && (dr < 0 || (dr == 0 && dc < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (!is_max) continue;
      auto at = [&](int dr, int dc) { return response[static_cast<std::size_t>(r + dr) * cols + (c + dc)]; };
      Vector2 pixel(c, r);
      const double dxx = at(0, 1) - 2 * v + at(0, -1);
      const double dyy = at(1, 0) - 2 * v + at(-1, 0);
      if (dxx < 0.0) pixel.x() += std::clamp(-0.5 * (at(0, 1) - at(0, -1)) / dxx, -0.5, 0.5);
      if (dyy < 0.0) pixel.y() += std::clamp(-0.5 * (at(1, 0) - at(-1, 0)) / dyy, -0.5, 0.5);
      Keypoint kp;
      kp.pixel = pixel;
      kp.response = v;
      out.push_back(std::move(kp));
    }
  }

  std::stable_sort(out.begin(), out.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
  if (out.size() > config.max_features) out.resize(config.max_features);
  for (auto& kp : out) {
    const double angle = config.oriented ? patch_orientation(image, kp.pixel, config.patch_radius) : 0.0;
    kp.descriptor = describe_at(image, kp.pixel, angle, config);
  }
  return out;
}

double descriptor_distance(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("descriptor length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

void write_keypoints(const std::vector<Keypoint>& keypoints, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(9);
  for (const auto& kp : keypoints) {
    out << kp.pixel.x() << ' ' << kp.pixel.y() << ' ' << kp.response;
    for (float v : kp.descriptor) out << ' ' << v;
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Keypoint> read_keypoints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Keypoint> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#')
      continue;
    std::istringstream ss(line);
    Keypoint kp;
    if (!(ss >> kp.pixel.x() >> kp.pixel.y() >> kp.response))
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed keypoint");
    float v;
    while (ss >> v) kp.descriptor.push_back(v);
    if (!ss.eof())
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed descriptor");
    if (!out.empty() && out.front().descriptor.size() != kp.descriptor.size())
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": descriptor length changes");
    out.push_back(std::move(kp));
  }
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& rgb_path) {
  auto p = rgb_path;
  p.replace_extension(".feat");
  return p;
}

std::vector<float> landmark_descriptor(std::int64_t id, int length) {
  std::mt19937_64 rng(frame_seed(static_cast<std::uint64_t>(id), 0, 0xD35C));
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<float> d(static_cast<std::size_t>(length));
  double norm2 = 0.0;
  for (auto& v : d) {
    v = gauss(rng);
    norm2 += static_cast<double>(v) * v;
  }
  const double norm = std::sqrt(norm2);
  for (auto& v : d) v = static_cast<float>(v / norm);
  return d;
}

std::vector<Keypoint> inject_ground_truth(const SyntheticScene& scene, const PoseSE3& camera_to_world,
                                          const InjectionNoise& noise) {
  const auto& k = scene.intrinsics;
  const PoseSE3 world_to_camera = camera_to_world.inverse();
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<Keypoint> out;
  for (const auto& lm : scene.landmarks) {
    const Vector3 pc = se3_apply(world_to_camera, lm.position);
    if (pc.z() <= 0.0) continue;
    const Vector2 uv(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy);
    if (uv.x() < 0.0 || uv.y() < 0.0 || uv.x() > k.width - 1 || uv.y() > k.height - 1) continue;
    const auto hit = ray_depth(scene, camera_to_world, uv);
    if (hit && *hit < pc.z() * (1.0 - 1e-9) - 1e-6) continue;  // occluded

    Keypoint kp;
    kp.pixel = uv;
    if (noise.pixel_sigma > 0.0) {
      kp.pixel.x() += noise.pixel_sigma * gauss(rng);
      kp.pixel.y() += noise.pixel_sigma * gauss(rng);
      if (kp.pixel.x() < 0.0 || kp.pixel.y() < 0.0 || kp.pixel.x() > k.width - 1 ||
          kp.pixel.y() > k.height - 1)
        continue;
    }
    kp.id = lm.id;
    kp.descriptor = landmark_descriptor(lm.id);
    kp.response = 1.0;
    out.push_back(std::move(kp));
  }
  return out;
}

}  // namespace pvo
