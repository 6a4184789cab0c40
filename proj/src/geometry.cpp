#include "lexeval/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "lexeval/kernels.hpp"

namespace lexeval {
namespace {

using Vec2 = std::array<double, 2>;

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

// Andrew's monotone chain; counter-clockwise, no collinear points.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Vec2& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    const Vec2& p = pts[i - 1];
    while (k >= t && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    twice += p[0] * q[1] - q[0] * p[1];
  }
  return std::abs(twice) * 0.5;
}

// Reduces an angle to [-pi/4, pi/4); rectangles are symmetric under
// quarter turns.
double canonical_yaw(double yaw) {
  constexpr double kQuarter = std::numbers::pi / 2.0;
  double r = std::fmod(yaw + kQuarter / 2.0, kQuarter);
  if (r < 0.0) r += kQuarter;
  r -= kQuarter / 2.0;
  if (r >= kQuarter / 2.0) r -= kQuarter;
  return r;
}

OrientedBox frame_box(const std::vector<Vec2>& xy, double zmin, double zmax, double yaw,
                      double min_extent) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  double umin = std::numeric_limits<double>::infinity();
  double umax = -umin;
  double vmin = umin;
  double vmax = -umin;
  for (const Vec2& p : xy) {
    const double u = p[0] * c + p[1] * s;
    const double v = -p[0] * s + p[1] * c;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  const double uc = 0.5 * (umin + umax);
  const double vc = 0.5 * (vmin + vmax);
  OrientedBox box;
  box.center = {uc * c - vc * s, uc * s + vc * c, 0.5 * (zmin + zmax)};
  box.half_extents = {0.5 * std::max(umax - umin, min_extent),
                      0.5 * std::max(vmax - vmin, min_extent),
                      0.5 * std::max(zmax - zmin, min_extent)};
  box.yaw = yaw;
  return box;
}

}  // namespace

VoxelKey voxel_key(const Point3& p, double resolution) {
  return VoxelKey{static_cast<std::int64_t>(std::floor(static_cast<double>(p[0]) / resolution)),
                  static_cast<std::int64_t>(std::floor(static_cast<double>(p[1]) / resolution)),
                  static_cast<std::int64_t>(std::floor(static_cast<double>(p[2]) / resolution))};
}

std::vector<std::size_t> voxel_downsample(std::span<const Point3> points, double resolution) {
  if (!(resolution > 0.0)) throw DomainError("voxel resolution must be positive");
  struct Cell {
    std::array<double, 3> sum{};
    std::size_t count = 0;
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
  };
  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slot_of;
  std::vector<Cell> cells;
  std::vector<std::size_t> slot(points.size());
  slot_of.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto [it, inserted] = slot_of.try_emplace(voxel_key(points[i], resolution), cells.size());
    if (inserted) cells.emplace_back();
    Cell& cell = cells[it->second];
    for (int a = 0; a < 3; ++a) cell.sum[a] += points[i][a];
    ++cell.count;
    slot[i] = it->second;
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    Cell& cell = cells[slot[i]];
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double centroid = cell.sum[a] / static_cast<double>(cell.count);
      const double d = static_cast<double>(points[i][a]) - centroid;
      d2 += d * d;
    }
    if (d2 < cell.best_d2) {
      cell.best_d2 = d2;
      cell.best = i;
    }
  }
  std::vector<std::size_t> reps;
  reps.reserve(cells.size());
  for (const Cell& cell : cells) reps.push_back(cell.best);
  std::sort(reps.begin(), reps.end());
  return reps;
}

std::size_t PointMatching::matched_count() const {
  return static_cast<std::size_t>(
      std::count_if(matched.begin(), matched.end(), [](std::uint32_t m) { return m != kMissing; }));
}

PointMatching match_points(std::span<const Point3> gt, std::span<const Point3> pred,
                           double max_distance) {
  if (!(max_distance > 0.0)) throw DomainError("match distance must be positive");
  if (pred.size() >= PointMatching::kMissing) throw DomainError("prediction cloud too large");
  return PointMatching{kernels::parallel::match_points(gt, pred, max_distance), max_distance};
}

std::array<std::array<double, 2>, 4> OrientedBox::footprint() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double hx = half_extents[0];
  const double hy = half_extents[1];
  const std::array<Vec2, 4> local = {Vec2{-hx, -hy}, Vec2{hx, -hy}, Vec2{hx, hy}, Vec2{-hx, hy}};
  std::array<Vec2, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {center[0] + local[i][0] * c - local[i][1] * s,
              center[1] + local[i][0] * s + local[i][1] * c};
  }
  return out;
}

bool OrientedBox::contains(const std::array<double, 3>& p, double slack) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double dx = p[0] - center[0];
  const double dy = p[1] - center[1];
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  return std::abs(u) <= half_extents[0] + slack && std::abs(v) <= half_extents[1] + slack &&
         std::abs(p[2] - center[2]) <= half_extents[2] + slack;
}

BoxFit fit_oriented_box(std::span<const Point3> points, double min_extent) {
  if (points.empty()) throw DomainError("cannot fit a box to an empty point set");
  double zmin = std::numeric_limits<double>::infinity();
  double zmax = -zmin;
  std::vector<Vec2> xy;
  xy.reserve(points.size());
  for (const Point3& p : points) {
    xy.push_back({p[0], p[1]});
    zmin = std::min(zmin, static_cast<double>(p[2]));
    zmax = std::max(zmax, static_cast<double>(p[2]));
  }
  if (points.size() < 4) return BoxFit{frame_box(xy, zmin, zmax, 0.0, min_extent), true};

  const std::vector<Vec2> hull = convex_hull(xy);
  if (hull.size() < 2) return BoxFit{frame_box(hull, zmin, zmax, 0.0, min_extent), true};

  double best_yaw = 0.0;
  double best_area = std::numeric_limits<double>::infinity();
  const std::size_t edges = hull.size() == 2 ? 1 : hull.size();
  for (std::size_t i = 0; i < edges; ++i) {
    const Vec2& a = hull[i];
    const Vec2& b = hull[(i + 1) % hull.size()];
    const double yaw = canonical_yaw(std::atan2(b[1] - a[1], b[0] - a[0]));
    const OrientedBox box = frame_box(hull, 0.0, 0.0, yaw, 0.0);
    const double area = box.half_extents[0] * box.half_extents[1];
    if (area < best_area) {
      best_area = area;
      best_yaw = yaw;
    }
  }
  return BoxFit{frame_box(hull, zmin, zmax, best_yaw, min_extent), hull.size() < 3};
}

double convex_intersection_area(std::span<const std::array<double, 2>> a,
                                std::span<const std::array<double, 2>> b) {
  std::vector<Vec2> poly(a.begin(), a.end());
  for (std::size_t e = 0; e < b.size() && !poly.empty(); ++e) {
    const Vec2& p = b[e];
    const Vec2& q = b[(e + 1) % b.size()];
    std::vector<Vec2> next;
    next.reserve(poly.size() + 1);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& cur = poly[i];
      const Vec2& prev = poly[(i + poly.size() - 1) % poly.size()];
      const double dc = cross(p, q, cur);
      const double dp = cross(p, q, prev);
      if (dc >= 0.0) {
        if (dp < 0.0) {
          const double t = dp / (dp - dc);
          next.push_back({prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])});
        }
        next.push_back(cur);
      } else if (dp >= 0.0) {
        const double t = dp / (dp - dc);
        next.push_back({prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])});
      }
    }
    poly = std::move(next);
  }
  return polygon_area(poly);
}

double box_iou(const OrientedBox& a, const OrientedBox& b) {
  if (a == b) return 1.0;
  const double zlo = std::max(a.center[2] - a.half_extents[2], b.center[2] - b.half_extents[2]);
  const double zhi = std::min(a.center[2] + a.half_extents[2], b.center[2] + b.half_extents[2]);
  if (zhi <= zlo) return 0.0;
  const auto fa = a.footprint();
  const auto fb = b.footprint();
  const double area = convex_intersection_area(fa, fb);
  if (area <= 0.0) return 0.0;
  const double inter = area * (zhi - zlo);
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<VoxelKey> voxel_set(std::span<const Point3> points, double resolution) {
  if (!(resolution > 0.0)) throw DomainError("voxel resolution must be positive");
  std::vector<VoxelKey> keys;
  keys.reserve(points.size());
  for (const Point3& p : points) keys.push_back(voxel_key(p, resolution));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

double voxel_set_iou(std::span<const VoxelKey> a, std::span<const VoxelKey> b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double pointset_iou(std::span<const Point3> a, std::span<const Point3> b, double resolution) {
  const auto ka = voxel_set(a, resolution);
  const auto kb = voxel_set(b, resolution);
  return voxel_set_iou(ka, kb);
}

}  // namespace lexeval
