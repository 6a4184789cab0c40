#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lexeval/geometry.hpp"
#include "lexeval/kernels.hpp"

namespace lexeval {
namespace {

std::vector<Point3> random_cloud(std::size_t n, double extent, std::mt19937& rng) {
  std::uniform_real_distribution<float> u(0.0f, static_cast<float>(extent));
  std::vector<Point3> p(n);
  for (auto& q : p) q = {u(rng), u(rng), u(rng)};
  return p;
}

TEST(Downsample, Examples) {
  const std::vector<Point3> two{{0, 0, 0}, {0.01f, 0, 0}};
  EXPECT_EQ(voxel_downsample(two, 0.05).size(), 1u);
  std::vector<Point3> grid;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) grid.push_back({0.05f * i + 0.025f, 0.05f * j + 0.025f, 0.025f});
  }
  EXPECT_EQ(voxel_downsample(grid, 0.05).size(), grid.size());
  EXPECT_TRUE(voxel_downsample(std::vector<Point3>{}, 0.05).empty());
  EXPECT_THROW(voxel_downsample(two, 0.0), DomainError);
}

TEST(Downsample, PicksMemberNearestCentroid) {
  const std::vector<Point3> p{{0.001f, 0, 0}, {0.02f, 0, 0}, {0.04f, 0, 0}};
  EXPECT_EQ(voxel_downsample(p, 0.05), std::vector<std::size_t>{1});
}

TEST(Downsample, IdempotentSubset) {
  std::mt19937 rng(3);
  const auto p = random_cloud(5000, 1.0, rng);
  const auto keep = voxel_downsample(p, 0.05);
  EXPECT_LE(keep.size(), p.size());
  EXPECT_TRUE(std::is_sorted(keep.begin(), keep.end()));
  const auto once = gather<Point3>(p, keep);
  const auto again = voxel_downsample(once, 0.05);
  EXPECT_EQ(again.size(), once.size());
}

TEST(Match, Examples) {
  const std::vector<Point3> gt{{0, 0, 0}, {1, 1, 1}};
  const auto same = match_points(gt, gt, 0.05);
  EXPECT_EQ(same.matched, (std::vector<std::uint32_t>{0, 1}));
  const auto none = match_points(gt, std::vector<Point3>{}, 0.05);
  EXPECT_EQ(none.matched_count(), 0u);
  const std::vector<Point3> origin{{0, 0, 0}};
  const std::vector<Point3> off{{0.1f, 0, 0}};
  EXPECT_FALSE(match_points(origin, off, 0.05).is_matched(0));
  EXPECT_THROW(match_points(origin, off, 0.0), DomainError);
}

TEST(Match, TiesGoToLowestIndex) {
  const std::vector<Point3> gt{{0, 0, 0}};
  const std::vector<Point3> pred{{0.02f, 0, 0}, {-0.02f, 0, 0}, {0, 0.02f, 0}};
  EXPECT_EQ(match_points(gt, pred, 0.05).matched[0], 0u);
}

// Independent brute force, double arithmetic.
std::vector<std::uint32_t> brute_match(const std::vector<Point3>& gt, const std::vector<Point3>& pred, double r) {
  std::vector<std::uint32_t> out(gt.size(), PointMatching::kMissing);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    double best = r * r;
    bool found = false;
    for (std::size_t p = 0; p < pred.size(); ++p) {
      double d = 0;
      for (int a = 0; a < 3; ++a) d += std::pow(static_cast<double>(gt[g][a]) - pred[p][a], 2);
      if (d <= r * r && (!found || d < best)) {
        best = d;
        found = true;
        out[g] = static_cast<std::uint32_t>(p);
      }
    }
  }
  return out;
}

TEST(Match, EqualsBruteForceOnRandomClouds) {
  std::mt19937 rng(17);
  for (const std::size_t n : {10, 500, 3000, 10000}) {
    const auto gt = random_cloud(n, 2.0, rng);
    auto pred = random_cloud(n, 2.0, rng);
    pred.insert(pred.end(), gt.begin(), gt.begin() + static_cast<std::ptrdiff_t>(n / 10));  // exact duplicates
    const auto expected = brute_match(gt, pred, 0.05);
    EXPECT_EQ(match_points(gt, pred, 0.05).matched, expected) << n;
    EXPECT_EQ(kernels::serial::match_points(gt, pred, 0.05), expected) << n;
  }
}

std::vector<Point3> cube_corners(double yaw, std::array<double, 3> c = {0, 0, 0}) {
  std::vector<Point3> p;
  for (int i = 0; i < 8; ++i) {
    const double x = (i & 1) ? 0.5 : -0.5, y = (i & 2) ? 0.5 : -0.5, z = (i & 4) ? 0.5 : -0.5;
    p.push_back({static_cast<float>(c[0] + x * std::cos(yaw) - y * std::sin(yaw)),
                 static_cast<float>(c[1] + x * std::sin(yaw) + y * std::cos(yaw)), static_cast<float>(c[2] + z)});
  }
  return p;
}

TEST(BoxFit, AxisAlignedCube) {
  const BoxFit f = fit_oriented_box(cube_corners(0.0, {2, 3, 4}));
  EXPECT_FALSE(f.degenerate);
  EXPECT_NEAR(f.box.center[0], 2, 1e-6);
  EXPECT_NEAR(f.box.center[1], 3, 1e-6);
  EXPECT_NEAR(f.box.center[2], 4, 1e-6);
  for (double h : f.box.half_extents) EXPECT_NEAR(h, 0.5, 1e-6);
  EXPECT_NEAR(f.box.yaw, 0.0, 1e-6);
}

TEST(BoxFit, RotatedCube) {
  const double yaw = std::numbers::pi / 6;
  const auto pts = cube_corners(yaw);
  const BoxFit f = fit_oriented_box(pts);
  EXPECT_NEAR(f.box.yaw, yaw, 1e-6);
  for (double h : f.box.half_extents) EXPECT_NEAR(h, 0.5, 1e-6);
  for (const Point3& p : pts) EXPECT_TRUE(f.box.contains({p[0], p[1], p[2]}, 1e-6));
}

TEST(BoxFit, CoincidentPointsClamp) {
  const std::vector<Point3> p(4, Point3{1, 1, 1});
  const BoxFit f = fit_oriented_box(p);
  EXPECT_TRUE(f.degenerate);
  for (double h : f.box.half_extents) EXPECT_NEAR(h, 0.025, 1e-12);
}

TEST(BoxFit, EnclosesRandomClouds) {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pts = random_cloud(4 + trial % 40, 1.5, rng);
    const BoxFit f = fit_oriented_box(pts);
    EXPECT_GE(f.box.yaw, -std::numbers::pi / 4);
    EXPECT_LT(f.box.yaw, std::numbers::pi / 4);
    for (const Point3& p : pts) EXPECT_TRUE(f.box.contains({p[0], p[1], p[2]}, 1e-6));
  }
}

TEST(BoxIou, Examples) {
  const OrientedBox unit{{0, 0, 0}, {0.5, 0.5, 0.5}, 0.0};
  EXPECT_DOUBLE_EQ(box_iou(unit, unit), 1.0);
  OrientedBox far = unit;
  far.center[0] = 2.0;
  EXPECT_EQ(box_iou(unit, far), 0.0);
  OrientedBox half = unit;
  half.center[0] = 0.5;
  EXPECT_NEAR(box_iou(unit, half), 1.0 / 3.0, 1e-9);
  OrientedBox above = unit;
  above.center[2] = 1.5;
  EXPECT_EQ(box_iou(unit, above), 0.0);
  OrientedBox quarter = unit;
  quarter.yaw = std::numbers::pi / 2;
  EXPECT_NEAR(box_iou(unit, quarter), 1.0, 1e-9);
}

TEST(BoxIou, SymmetricAndBounded) {
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> c(-1, 1), h(0.1, 1), y(-1.5, 1.5);
  for (int i = 0; i < 2000; ++i) {
    const OrientedBox a{{c(rng), c(rng), c(rng)}, {h(rng), h(rng), h(rng)}, y(rng)};
    const OrientedBox b{{c(rng), c(rng), c(rng)}, {h(rng), h(rng), h(rng)}, y(rng)};
    const double ab = box_iou(a, b);
    EXPECT_NEAR(ab, box_iou(b, a), 1e-12);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0 + 1e-12);
  }
}

TEST(ConvexClip, SquareOverlap) {
  const std::vector<std::array<double, 2>> a{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  const std::vector<std::array<double, 2>> b{{1, 1}, {3, 1}, {3, 3}, {1, 3}};
  EXPECT_NEAR(convex_intersection_area(a, b), 1.0, 1e-12);
}

TEST(PointsetIou, Examples) {
  const std::vector<Point3> a{{0.025f, 0.025f, 0.025f}, {0.075f, 0.025f, 0.025f}};
  const std::vector<Point3> b{{0.075f, 0.025f, 0.025f}, {0.125f, 0.025f, 0.025f}};
  EXPECT_DOUBLE_EQ(pointset_iou(a, a), 1.0);
  EXPECT_NEAR(pointset_iou(a, b), 1.0 / 3.0, 1e-15);
  const std::vector<Point3> far{{10, 10, 10}};
  EXPECT_EQ(pointset_iou(a, far), 0.0);
  EXPECT_EQ(pointset_iou(std::vector<Point3>{}, std::vector<Point3>{}), 0.0);
  const std::vector<Point3> rev{a[1], a[0]};
  EXPECT_DOUBLE_EQ(pointset_iou(rev, b), pointset_iou(b, a));
}

}  // namespace
}  // namespace lexeval
