#include "pvo/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numbers>
#include <sstream>

namespace pvo {
namespace {

bool skip_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

std::vector<StampedFile> read_file_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::vector<StampedFile> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    std::istringstream ss(line);
    StampedFile entry;
    if (!(ss >> entry.timestamp >> entry.file))
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": expected \"timestamp file\"");
    out.push_back(std::move(entry));
  }
  return out;
}

// Index of the entry nearest to t in a timestamp-sorted list, or npos beyond max_dt.
template <typename T, typename Stamp>
std::size_t nearest(const std::vector<T>& sorted, double t, double max_dt, Stamp stamp) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), t,
                             [&](const T& e, double value) { return stamp(e) < value; });
  std::size_t best = std::string::npos;
  double best_dt = max_dt;
  for (auto cand : {it, it == sorted.begin() ? it : std::prev(it)}) {
    if (cand == sorted.end()) continue;
    const double dt = std::abs(stamp(*cand) - t);
    if (dt < best_dt) {
      best_dt = dt;
      best = static_cast<std::size_t>(cand - sorted.begin());
    }
  }
  return best;
}

}  // namespace

SequenceManifest load_sequence(const std::filesystem::path& directory, double max_dt) {
  if (!std::filesystem::is_directory(directory)) throw DatasetError("not a directory: " + directory.string());
  SequenceManifest m;
  m.directory = directory;
  m.rgb = read_file_list(directory / "rgb.txt");
  m.depth = read_file_list(directory / "depth.txt");
  if (std::filesystem::exists(directory / "groundtruth.txt"))
    m.groundtruth = read_trajectory(directory / "groundtruth.txt");

  auto by_time = [](const StampedFile& a, const StampedFile& b) { return a.timestamp < b.timestamp; };
  std::stable_sort(m.rgb.begin(), m.rgb.end(), by_time);
  std::stable_sort(m.depth.begin(), m.depth.end(), by_time);

  struct Pair {
    double dt;
    std::size_t rgb, depth;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < m.rgb.size(); ++i) {
    const double t = m.rgb[i].timestamp;
    auto lo = std::lower_bound(m.depth.begin(), m.depth.end(), t - max_dt,
                               [](const StampedFile& e, double v) { return e.timestamp < v; });
    for (auto it = lo; it != m.depth.end() && it->timestamp <= t + max_dt; ++it) {
      const double dt = std::abs(it->timestamp - t);
      if (dt < max_dt) pairs.push_back({dt, i, static_cast<std::size_t>(it - m.depth.begin())});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.dt < b.dt; });
  std::vector<char> rgb_used(m.rgb.size(), 0), depth_used(m.depth.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  for (const auto& p : pairs) {
    if (rgb_used[p.rgb] || depth_used[p.depth]) continue;
    rgb_used[p.rgb] = depth_used[p.depth] = 1;
    chosen.emplace_back(p.rgb, p.depth);
  }
  std::sort(chosen.begin(), chosen.end());
  for (const auto& [r, d] : chosen) m.associations.push_back({m.rgb[r], m.depth[d]});
  m.dropped = m.rgb.size() - m.associations.size();
  if (m.dropped > 0)
    m.warnings.push_back(std::to_string(m.dropped) + " of " + std::to_string(m.rgb.size()) +
                         " rgb frames have no depth frame within " + format_fixed6(max_dt) + " s");
  return m;
}

std::vector<TimedPose> read_trajectory(std::istream& in, const std::string& name) {
  std::vector<TimedPose> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skip_line(line)) continue;
    std::istringstream ss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw DatasetError(name + ":" + std::to_string(line_no) + ": expected \"timestamp tx ty tz qx qy qz qw\"");
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (std::abs(q.norm() - 1.0) > 1e-2)
      throw DatasetError(name + ":" + std::to_string(line_no) + ": quaternion is not unit length");
    q.normalize();
    out.push_back({t, PoseSE3::from(q.toRotationMatrix(), 1000.0 * Vector3(tx, ty, tz))});
  }
  return out;
}

std::vector<TimedPose> read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  return read_trajectory(in, path.string());
}

std::string format_fixed6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  std::string s(buf);
  if (s.find('.') != std::string::npos) {
    s.erase(s.find_last_not_of('0') + 1);
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

void write_trajectory(const TrajectoryEstimate& trajectory, std::ostream& out) {
  for (const auto& tp : trajectory.poses) {
    Eigen::Quaterniond q(tp.pose.rotation);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const Vector3 t = tp.pose.translation / 1000.0;
    out << format_fixed6(tp.timestamp);
    for (double v : {t.x(), t.y(), t.z(), q.x(), q.y(), q.z(), q.w()}) out << ' ' << format_fixed6(v);
    out << '\n';
  }
}

void write_trajectory(const TrajectoryEstimate& trajectory, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write " + path.string());
  write_trajectory(trajectory, out);
  if (!out) throw DatasetError("write failed: " + path.string());
}

RpeResult relative_pose_error(const std::vector<TimedPose>& estimate, const std::vector<TimedPose>& groundtruth,
                              double interval, double max_dt) {
  auto stamp = [](const TimedPose& p) { return p.timestamp; };
  std::vector<TimedPose> gt = groundtruth;
  std::stable_sort(gt.begin(), gt.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });

  double sum_t = 0.0, sum_r = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double t0 = estimate[i].timestamp;
    const std::size_t j = nearest(estimate, t0 + interval, max_dt, stamp);
    if (j == std::string::npos || j <= i) continue;
    const std::size_t gi = nearest(gt, t0, max_dt, stamp);
    const std::size_t gj = nearest(gt, estimate[j].timestamp, max_dt, stamp);
    if (gi == std::string::npos || gj == std::string::npos) continue;
    const PoseSE3 q_rel = gt[gi].pose.inverse() * gt[gj].pose;
    const PoseSE3 p_rel = estimate[i].pose.inverse() * estimate[j].pose;
    const PoseSE3 e = q_rel.inverse() * p_rel;
    sum_t += e.translation.squaredNorm();
    const double angle = rotation_angle(e.rotation) * 180.0 / std::numbers::pi;
    sum_r += angle * angle;
    ++n;
  }
  if (n == 0) throw DatasetError("relative_pose_error: no estimate pair overlaps the ground truth");
  return {std::sqrt(sum_t / n), std::sqrt(sum_r / n), n};
}

void write_rpe_report(const RpeResult& rpe, std::ostream& out) {
  out << "metric value unit\n";
  out << "rpe_translation_rmse " << format_fixed6(rpe.translation_rmse_mm / 1000.0) << " m\n";
  out << "rpe_rotation_rmse " << format_fixed6(rpe.rotation_rmse_deg) << " deg\n";
  out << "rpe_pairs " << rpe.pairs << " count\n";
}

DepthImage load_depth_png(const std::filesystem::path& path, const CameraIntrinsics& intrinsics) {
  const PngImage png = read_png(path);
  if (png.bit_depth != 16 || png.channels != 1)
    throw DatasetError(path.string() + ": depth PNG must be 16-bit single-channel");
  CameraIntrinsics k = intrinsics;
  k.width = png.width;
  k.height = png.height;
  DepthImage img(png.height, png.width, k);
  for (std::size_t i = 0; i < png.samples.size(); ++i) img.raw[i] = png.samples[i];
  return img;
}

GrayImage load_gray_png(const std::filesystem::path& path) {
  const PngImage png = read_png(path);
  GrayImage img(png.height, png.width);
  const double scale = png.bit_depth == 16 ? 1.0 / 257.0 : 1.0;
  const int ch = png.channels;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const std::uint16_t* px = &png.samples[i * ch];
    double v;
    if (ch <= 2)
      v = px[0];
    else
      v = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    img.data[i] = static_cast<float>(v * scale);
  }
  return img;
}

}  // namespace pvo
