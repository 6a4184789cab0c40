#pragma once

// Point-cloud and box geometry: voxel downsampling, nearest-neighbour point
// matching, yaw-only oriented boxes and set IoU.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "lexeval/common.hpp"

namespace lexeval {

struct VoxelKey {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

// floor(coord / resolution) per axis.
VoxelKey voxel_key(const Point3& p, double resolution);

// Indices (ascending) of one representative per occupied voxel: the member
// closest to the voxel centroid, lowest index on ties. Attributes are
// carried by indexing with the result.
std::vector<std::size_t> voxel_downsample(std::span<const Point3> points,
                                          double resolution);

template <typename T>
std::vector<T> gather(std::span<const T> values, std::span<const std::size_t> indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(values[i]);
  return out;
}

struct PointMatching {
  static constexpr std::uint32_t kMissing = std::numeric_limits<std::uint32_t>::max();

  std::vector<std::uint32_t> matched;  // per ground-truth point
  double max_distance = kDefaultVoxelSize;

  bool is_matched(std::size_t gt_index) const { return matched[gt_index] != kMissing; }
  std::size_t matched_count() const;
};

// Nearest predicted point within max_distance for every ground-truth point,
// ties to the lowest predicted index. Exact; uses a hash grid.
PointMatching match_points(std::span<const Point3> gt, std::span<const Point3> pred,
                           double max_distance = kDefaultVoxelSize);

// Box rotated by `yaw` about +z. half_extents[0] lies along the rotated
// x axis.
struct OrientedBox {
  std::array<double, 3> center{};
  std::array<double, 3> half_extents{};
  double yaw = 0.0;

  double volume() const {
    return 8.0 * half_extents[0] * half_extents[1] * half_extents[2];
  }
  // Footprint corners, counter-clockwise.
  std::array<std::array<double, 2>, 4> footprint() const;
  bool contains(const std::array<double, 3>& p, double slack = 0.0) const;

  friend bool operator==(const OrientedBox&, const OrientedBox&) = default;
};

struct BoxFit {
  OrientedBox box;
  // Fewer than 4 points (axis-aligned fallback) or a collinear footprint.
  bool degenerate = false;
};

// Minimum-area footprint rectangle over the horizontal convex hull, with
// the raw z range. Full extents below `min_extent` are widened to it.
// Yaw is reported in [-pi/4, pi/4).
BoxFit fit_oriented_box(std::span<const Point3> points, double min_extent = kDefaultVoxelSize);

// Intersection over union of two yaw boxes: clipped footprint area times
// vertical overlap.
double box_iou(const OrientedBox& a, const OrientedBox& b);

// Area of the intersection of two convex counter-clockwise polygons.
double convex_intersection_area(std::span<const std::array<double, 2>> a,
                                std::span<const std::array<double, 2>> b);

// Sorted, deduplicated voxel keys of a point set.
std::vector<VoxelKey> voxel_set(std::span<const Point3> points, double resolution);

// |a ∩ b| / |a ∪ b| for sorted, deduplicated key sets; 0 when both empty.
double voxel_set_iou(std::span<const VoxelKey> a, std::span<const VoxelKey> b);

double pointset_iou(std::span<const Point3> a, std::span<const Point3> b,
                    double resolution = kDefaultVoxelSize);

}  // namespace lexeval
