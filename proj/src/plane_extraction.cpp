#include "pvo/plane_extraction.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace pvo {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct Moments {
  double n = 0.0;
  Vector3 sum = Vector3::Zero();
  Matrix3 outer = Matrix3::Zero();

  void add(const Vector3& p) {
    n += 1.0;
    sum += p;
    outer += p * p.transpose();
  }
  void merge(const Moments& o) {
    n += o.n;
    sum += o.sum;
    outer += o.outer;
  }
  Vector3 centroid() const { return sum / n; }

  // Single-pass PCA; adequate for segmentation decisions.
  PlaneFitSummary plane() const {
    const Vector3 c = centroid();
    const Matrix3 cov = outer / n - c * c.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix3> es(cov);
    PlaneFitSummary s;
    s.normal = es.eigenvectors().col(0);
    s.d = -s.normal.dot(c);
    if (s.d > 0.0) {
      s.normal = -s.normal;
      s.d = -s.d;
    }
    s.rms = std::sqrt(std::max(es.eigenvalues()(0), 0.0));
    return s;
  }
};

double median_inplace(std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

struct Cell {
  Moments moments;
  std::size_t valid = 0;
  std::size_t area = 0;
  bool planar = false;
  PlaneFitSummary plane;
};

}  // namespace

PlaneFitSummary fit_plane_pca(std::span<const Vector3> points) {
  if (points.size() < 3) throw PlaneFitError(PlaneFitError::Reason::too_few_points, "need >= 3 points");
  Vector3 c = Vector3::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(points.size());
  Matrix3 cov = Matrix3::Zero();
  for (const auto& p : points) {
    const Vector3 q = p - c;
    cov += q * q.transpose();
  }
  cov /= static_cast<double>(points.size());
  Eigen::SelfAdjointEigenSolver<Matrix3> es(cov);
  PlaneFitSummary s;
  s.normal = es.eigenvectors().col(0).normalized();
  s.d = -s.normal.dot(c);
  if (s.d > 0.0) {
    s.normal = -s.normal;
    s.d = -s.d;
  }
  double sq = 0.0;
  for (const auto& p : points) {
    const double e = s.normal.dot(p) + s.d;
    sq += e * e;
  }
  s.rms = std::sqrt(sq / static_cast<double>(points.size()));
  return s;
}

std::vector<PlaneSegment> segment_planes(const OrganizedCloud& cloud,
                                         const PlaneExtractionConfig& config) {
  std::vector<PlaneSegment> segments;
  if (cloud.size() == 0) return segments;

  const int rows = cloud.rows();
  const int cols = cloud.cols();
  const int cs = std::max(config.cell_size, 2);
  const int ncx = (cols + cs - 1) / cs;
  const int ncy = (rows + cs - 1) / cs;
  const auto cell_of = [&](int r, int c) { return (r / cs) * ncx + (c / cs); };

  std::vector<Cell> cells(static_cast<std::size_t>(ncx) * ncy);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      Cell& cell = cells[cell_of(r, c)];
      ++cell.area;
      const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
      if (!cloud.valid(idx)) continue;
      ++cell.valid;
      cell.moments.add(cloud.position(idx));
    }
  }
  for (auto& cell : cells) {
    if (cell.valid < 3 ||
        static_cast<double>(cell.valid) < config.cell_min_valid_fraction * static_cast<double>(cell.area))
      continue;
    cell.plane = cell.moments.plane();
    cell.planar = cell.plane.rms <= config.segment_rms_threshold_mm;
  }

  // Cell-level region growing, seeded from the flattest cells.
  std::vector<int> cell_region(cells.size(), -1);
  std::vector<int> order;
  for (int i = 0; i < static_cast<int>(cells.size()); ++i)
    if (cells[i].planar) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return cells[a].plane.rms < cells[b].plane.rms; });

  const double cos_merge = std::cos(config.merge_angle_deg * kDegToRad);
  std::vector<Moments> region_moments;
  for (int seed : order) {
    if (cell_region[seed] >= 0) continue;
    const int region = static_cast<int>(region_moments.size());
    Moments m = cells[seed].moments;
    PlaneFitSummary plane = cells[seed].plane;
    cell_region[seed] = region;
    std::deque<int> queue{seed};
    while (!queue.empty()) {
      const int ci = queue.front();
      queue.pop_front();
      const int cx = ci % ncx;
      const int cy = ci / ncx;
      const int nbrs[4][2] = {{cx - 1, cy}, {cx + 1, cy}, {cx, cy - 1}, {cx, cy + 1}};
      for (const auto& nb : nbrs) {
        if (nb[0] < 0 || nb[0] >= ncx || nb[1] < 0 || nb[1] >= ncy) continue;
        const int ni = nb[1] * ncx + nb[0];
        const Cell& cand = cells[ni];
        if (!cand.planar || cell_region[ni] >= 0) continue;
        if (std::abs(cand.plane.normal.dot(plane.normal)) < cos_merge) continue;
        const double dist = plane.normal.dot(cand.moments.centroid()) + plane.d;
        if (std::abs(dist) >= config.merge_distance_mm) continue;
        cell_region[ni] = region;
        m.merge(cand.moments);
        plane = m.plane();
        queue.push_back(ni);
      }
    }
    region_moments.push_back(m);
  }

  const std::size_t npix = cloud.size();
  std::vector<int> label(npix, -1);
  std::vector<std::vector<std::size_t>> members(region_moments.size());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
      const int reg = cell_region[cell_of(r, c)];
      if (reg >= 0 && cloud.valid(idx)) {
        label[idx] = reg;
        members[reg].push_back(idx);
      }
    }
  }

  // Pixel-wise growth into cells that were not planar (plane borders,
  // depth discontinuities), largest regions first.
  std::vector<int> by_size(region_moments.size());
  std::iota(by_size.begin(), by_size.end(), 0);
  std::stable_sort(by_size.begin(), by_size.end(),
                   [&](int a, int b) { return members[a].size() > members[b].size(); });
  for (int reg : by_size) {
    const PlaneFitSummary plane = region_moments[reg].plane();
    std::deque<std::size_t> queue(members[reg].begin(), members[reg].end());
    while (!queue.empty()) {
      const std::size_t idx = queue.front();
      queue.pop_front();
      const int r = static_cast<int>(idx / cols);
      const int c = static_cast<int>(idx % cols);
      const int nbrs[4][2] = {{r, c - 1}, {r, c + 1}, {r - 1, c}, {r + 1, c}};
      for (const auto& nb : nbrs) {
        if (nb[0] < 0 || nb[0] >= rows || nb[1] < 0 || nb[1] >= cols) continue;
        const std::size_t ni = static_cast<std::size_t>(nb[0]) * cols + nb[1];
        if (label[ni] >= 0 || !cloud.valid(ni) || cells[cell_of(nb[0], nb[1])].planar) continue;
        if (std::abs(plane.normal.dot(cloud.position(ni)) + plane.d) >= config.merge_distance_mm)
          continue;
        label[ni] = reg;
        members[reg].push_back(ni);
        queue.push_back(ni);
      }
    }
  }

  std::vector<Vector3> pts;
  for (int reg : by_size) {
    auto& px = members[reg];
    if (px.size() < config.min_segment_size) continue;
    pts.clear();
    for (auto idx : px) pts.push_back(cloud.position(idx));
    if (fit_plane_pca(pts).rms > config.segment_rms_threshold_mm) continue;
    std::sort(px.begin(), px.end());
    PlaneSegment seg;
    seg.inlier_mask = Bitmask(npix);
    for (auto idx : px) seg.inlier_mask.set(idx);
    seg.pixels = std::move(px);
    segments.push_back(std::move(seg));
  }
  return segments;
}

std::optional<PlaneSegment> ransac_filter(const PlaneSegment& segment, const OrganizedCloud& cloud,
                                          const PlaneExtractionConfig& config) {
  const std::size_t n = segment.pixels.size();
  if (n < 3) throw std::invalid_argument("ransac_filter: segment needs at least 3 points");

  std::vector<Vector3> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = cloud.position(segment.pixels[i]);

  std::mt19937_64 rng(config.ransac_seed ^ (segment.pixels.front() * 0x9E3779B97F4A7C15ULL));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  const double thr = config.inlier_threshold_mm;
  std::size_t best_count = 0;
  Vector3 best_normal = Vector3::UnitZ();
  double best_d = 0.0;
  double required = config.ransac_max_iterations;
  for (int it = 0; it < config.ransac_max_iterations && it < required; ++it) {
    const std::size_t i0 = pick(rng), i1 = pick(rng), i2 = pick(rng);
    if (i0 == i1 || i1 == i2 || i0 == i2) continue;
    const Vector3 cr = (pts[i1] - pts[i0]).cross(pts[i2] - pts[i0]);
    const double len = cr.norm();
    if (len < 1e-9) continue;
    const Vector3 normal = cr / len;
    const double d = -normal.dot(pts[i0]);
    std::size_t count = 0;
    for (const auto& p : pts)
      if (std::abs(normal.dot(p) + d) < thr) ++count;
    if (count > best_count) {
      best_count = count;
      best_normal = normal;
      best_d = d;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double p_fail = 1.0 - w * w * w;
      required = p_fail <= 0.0 ? 0.0
                                : std::log(1.0 - config.ransac_confidence) / std::log(p_fail);
    }
  }
  if (best_count < 3 ||
      static_cast<double>(best_count) < config.min_inlier_fraction * static_cast<double>(n))
    return std::nullopt;

  std::vector<std::size_t> consensus;
  consensus.reserve(best_count);
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(best_normal.dot(pts[i]) + best_d) < thr) consensus.push_back(i);

  // Robust refinement within the consensus: drop points whose studentized
  // distance exceeds refine_gate_sigmas robust standard deviations. Removes
  // neighbouring-surface pixels that happen to lie within the threshold.
  std::vector<double> sigma_n(consensus.size());
  std::vector<unsigned char> keep(consensus.size(), 1);
  std::vector<double> s(consensus.size());
  std::vector<double> scratch;
  std::vector<Vector3> kept_pts;
  Vector3 normal = best_normal;
  double d = best_d;
  const double fx = cloud.intrinsics().fx, fy = cloud.intrinsics().fy;
  const double sp2 = cloud.noise().sigma_p * cloud.noise().sigma_p;
  for (int iter = 0; iter < config.refine_max_iterations; ++iter) {
    // n^T Sigma_P n in closed form: Sigma_P = J diag(sp^2, sp^2, sZ^2) J^T with
    // J = [Z/fx e_x, Z/fy e_y, P/Z].
    const double lateral = sp2 * (normal.x() * normal.x() / (fx * fx) + normal.y() * normal.y() / (fy * fy));
    for (std::size_t k = 0; k < consensus.size(); ++k) {
      const Vector3& p = pts[consensus[k]];
      const double z = p.z();
      const double sz = depth_sigma(z, cloud.noise());
      const double along = normal.dot(p) / z;
      const double var = lateral * z * z + sz * sz * along * along;
      s[k] = std::abs(normal.dot(p) + d) / std::sqrt(std::max(var, 1e-300));
    }
    scratch = s;
    const double scale = 1.4826 * median_inplace(scratch);
    const double gate = std::max(config.refine_gate_sigmas * scale, 1e-6);
    bool changed = false;
    kept_pts.clear();
    for (std::size_t k = 0; k < consensus.size(); ++k) {
      const unsigned char in = s[k] <= gate ? 1 : 0;
      changed |= in != keep[k];
      keep[k] = in;
      if (in) kept_pts.push_back(pts[consensus[k]]);
    }
    if (kept_pts.size() < 3) return std::nullopt;
    if (!changed && iter > 0) break;
    const PlaneFitSummary fit = fit_plane_pca(kept_pts);
    normal = fit.normal;
    d = fit.d;
  }

  PlaneSegment out;
  out.inlier_mask = Bitmask(cloud.size());
  for (std::size_t k = 0; k < consensus.size(); ++k) {
    if (!keep[k]) continue;
    const std::size_t idx = segment.pixels[consensus[k]];
    out.pixels.push_back(idx);
    out.inlier_mask.set(idx);
  }
  return out;
}

WlsSystem wls_normal_equations(std::span<const Point3WithCov> points) {
  WlsSystem sys;
  for (const auto& p : points) {
    const double var_z = p.covariance(2, 2);
    if (!(p.position.z() > 0.0) || !(var_z > 0.0))
      throw PlaneFitError(PlaneFitError::Reason::invalid_depth, "point with invalid depth or variance");
    const double w = 1.0 / var_z;
    sys.a += w * p.position * p.position.transpose();
    sys.b -= w * p.position;
  }
  return sys;
}

PlaneMinimal fit_plane_wls(std::span<const Point3WithCov> points, double length_unit_mm,
                           double max_theta_norm) {
  if (points.size() < 3) throw PlaneFitError(PlaneFitError::Reason::too_few_points, "need >= 3 points");
  const WlsSystem sys = wls_normal_equations(points);

  Eigen::SelfAdjointEigenSolver<Matrix3> es(sys.a);
  const Vector3 ev = es.eigenvalues();
  if (!(ev(0) > 1e-12 * ev(2)))
    throw PlaneFitError(PlaneFitError::Reason::singular, "plane fit normal matrix is singular");

  PlaneMinimal plane;
  const Matrix3 a_inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  plane.theta_m = a_inv * sys.b;
  // A is unit-free (w P P^T); theta scales with 1/length, so its covariance
  // in the fit unit converts to mm^-2 by 1/unit^2.
  plane.covariance = 0.5 * (a_inv + a_inv.transpose()) / (length_unit_mm * length_unit_mm);
  plane.inlier_count = points.size();
  if (!(plane.theta_m.norm() <= max_theta_norm))
    throw PlaneFitError(PlaneFitError::Reason::near_origin, "plane passes too close to the camera centre");
  return plane;
}

Eigen::Matrix<double, 4, 3> to_hessian_jacobian(const Vector3& theta) {
  const double n = theta.norm();
  const double n3 = n * n * n;
  Eigen::Matrix<double, 4, 3> j;
  j.topRows<3>() = -(Matrix3::Identity() / n - theta * theta.transpose() / n3);
  j.row(3) = theta.transpose() / n3;
  return j;
}

PlaneHessian to_hessian(const PlaneMinimal& plane) {
  const double n = plane.theta_m.norm();
  if (!(n > 0.0)) throw std::invalid_argument("to_hessian: theta_m must be non-zero");
  PlaneHessian h;
  h.normal = -plane.theta_m / n;
  h.d = -1.0 / n;
  const auto j = to_hessian_jacobian(plane.theta_m);
  h.covariance = j * plane.covariance * j.transpose();
  h.covariance = 0.5 * (h.covariance + h.covariance.transpose());
  h.inlier_count = plane.inlier_count;
  return h;
}

std::vector<PlaneHessian> extract_planes(const OrganizedCloud& cloud,
                                         const PlaneExtractionConfig& config) {
  std::vector<PlaneHessian> planes;
  for (const auto& seg : segment_planes(cloud, config)) {
    auto filtered = ransac_filter(seg, cloud, config);
    if (!filtered) continue;
    const std::vector<std::size_t> inliers = std::move(filtered->pixels);

    // Uniform subsample for the fit. Sample points that end up beyond the
    // inlier threshold of the fitted plane are dropped and the fit repeated;
    // the sample only shrinks, so this terminates.
    const std::size_t m = std::min(inliers.size(), config.max_fit_points);
    std::vector<Point3WithCov> sample;
    sample.reserve(m);
    for (std::size_t i = 0; i < m; ++i) sample.push_back(*cloud.at(inliers[i * inliers.size() / m]));
    std::optional<PlaneHessian> plane;
    while (sample.size() >= 3) {
      try {
        plane = to_hessian(fit_plane_wls(sample, config.fit_length_unit_mm, config.max_theta_norm));
      } catch (const PlaneFitError&) {
        plane.reset();
        break;
      }
      const auto before = sample.size();
      std::erase_if(sample, [&](const Point3WithCov& p) {
        return std::abs(plane->signed_distance(p.position)) > config.inlier_threshold_mm;
      });
      if (sample.size() == before) break;
      plane.reset();
    }
    if (!plane) continue;
    std::vector<std::size_t> kept;
    kept.reserve(inliers.size());
    for (auto idx : inliers)
      if (std::abs(plane->signed_distance(cloud.position(idx))) <= config.inlier_threshold_mm) kept.push_back(idx);
    plane->inlier_mask = Bitmask(cloud.size());
    for (auto idx : kept) plane->inlier_mask.set(idx);
    plane->inlier_count = kept.size();
    planes.push_back(std::move(*plane));
  }
  return planes;
}

}  // namespace pvo
