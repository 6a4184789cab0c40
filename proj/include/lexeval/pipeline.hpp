#pragma once

// Scene-level segmentation pipeline: downsample both clouds, match
// ground-truth points to predicted points, rank and score.

#include <optional>
#include <vector>

#include "lexeval/geometry.hpp"
#include "lexeval/labels.hpp"
#include "lexeval/prediction.hpp"
#include "lexeval/retrieval.hpp"
#include "lexeval/seg_metrics.hpp"
#include "lexeval/similarity.hpp"

namespace lexeval {

struct PipelineOptions {
  double voxel_size = kDefaultVoxelSize;
  double match_distance = kDefaultVoxelSize;
  SegmentationOptions segmentation;
};

// Ground-truth scene restricted to its voxel representatives.
GroundTruthScene downsample_scene(const GroundTruthScene& scene, double voxel_size);

struct ScenePipelineResult {
  GroundTruthScene evaluated;  // downsampled ground truth
  PointMatching matching;      // into the downsampled, feature-bearing prediction points
  SceneSegmentation segmentation;
  PointCategories categories;
};

// Predicted points without a feature (unclaimed in object mode) are
// dropped before downsampling.
ScenePipelineResult run_segmentation(const GroundTruthScene& scene, const Prediction& prediction,
                                     const LabelEmbeddings& embeddings, const PromptList& prompts,
                                     const PipelineOptions& options = {});

struct RetrievalPipelineOptions {
  RetrievalOptions retrieval;
  // Suppress overlapping instances before ranking.
  std::optional<double> nms_threshold;
  // Evaluate only queries of this kind.
  std::optional<QueryKind> kind;
};

// Object-mode retrieval for one scene. `query_embeddings` has one row per
// entry of `queries`.
SceneRetrieval run_retrieval(const GroundTruthScene& scene, const std::vector<RetrievalQuery>& queries,
                             const Matrix& query_embeddings, const Prediction& prediction,
                             const RetrievalPipelineOptions& options = {});

}  // namespace lexeval
