#pragma once

// Deterministic synthetic datasets with planted failure modes. Every
// prediction ranking is constructed label by label, so the expected
// reports follow from the construction alone.
//
// Geometry: objects are lattices with 0.2 m spacing whose points sit at
// voxel centres. Clutter neighbours share a region, offset by 0.1 m, so a
// ground-truth point never lies within matching distance of a neighbour's
// prediction. Dense predictions copy each non-missing point with a small
// jitter that keeps it inside its voxel.
//
// Rankings: feature = sum over ranks r of (|L| - r) * e_label(r) with
// orthonormal label embeddings e, which fixes a strict full ranking.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lexeval/labels.hpp"
#include "lexeval/prediction.hpp"
#include "lexeval/retrieval.hpp"
#include "lexeval/seg_metrics.hpp"

namespace lexeval {

// Per point outcome at top-1, in Category order.
using FailureMix = std::array<double, kCategoryCount>;

struct FixtureConfig {
  std::uint64_t seed = 1;
  std::size_t scenes = 1;
  std::size_t objects = 6;
  // Upper bound; with vary_sizes objects draw from [ceil(n / 2), n].
  std::size_t points_per_object = 24;
  bool vary_sizes = true;
  std::size_t synonyms = 2;
  std::size_t depictions = 1;
  std::size_t visually_similar = 1;
  // Labels that belong to no object; at least 10.
  std::size_t distractors = 10;
  // 0 picks the smallest sufficient dimension.
  std::size_t dim = 0;
  FailureMix mix{1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  // Chance that a non-synonym point also ranks a synonym within the top 10.
  double recovery_probability = 0.5;
  double ambiguous_probability = 0.2;
  // Retrieval: per query, up to this many far away decoys outrank the
  // target; each object's prediction covers a fraction drawn from
  // `coverages` of its points.
  std::size_t max_decoys = 2;
  std::vector<double> coverages{1.0, 0.8, 0.6, 0.4, 0.2};
  std::vector<std::size_t> top_n{1, 5, 10};
};

inline constexpr InstanceId kFixtureWallId = 999;

struct FixtureScene {
  GroundTruthScene scene;
  Prediction dense;
  // Object-centric prediction over a cloud holding exact copies of the
  // ground-truth points followed by decoy points.
  Prediction objects;
  std::vector<RetrievalQuery> queries;
  Matrix query_embeddings;
  // Planted top-1 outcome per ground-truth point (walls: kIncorrect).
  std::vector<Category> point_modes;
};

struct Fixture {
  FixtureConfig config;
  PromptList prompts;
  Matrix label_embeddings;
  std::vector<FixtureScene> scenes;
  SegmentationReport expected_segmentation;
  RetrievalReport expected_retrieval;  // per-query averaging
};

// Throws DomainError for invalid or infeasible configurations (for
// example clutter bleed with a single object).
Fixture generate_fixture(const FixtureConfig& config);

// <out>/dataset/...                 ground truth and prompt list
// <out>/predictions/dense/...       dense prediction per scene
// <out>/predictions/object/...      object prediction, queries embeddings
// <out>/expected/segmentation_report.json, retrieval_report.json
void write_fixture(const Fixture& fixture, const std::filesystem::path& out);

}  // namespace lexeval
