#include "lexeval/pipeline.hpp"

namespace lexeval {

GroundTruthScene downsample_scene(const GroundTruthScene& scene, double voxel_size) {
  const std::vector<std::size_t> keep = voxel_downsample(scene.points, voxel_size);
  GroundTruthScene out;
  out.name = scene.name;
  out.points = gather<Point3>(scene.points, keep);
  out.instance_ids = gather<InstanceId>(scene.instance_ids, keep);
  out.labels = scene.labels;
  out.excluded = scene.excluded;
  return out;
}

ScenePipelineResult run_segmentation(const GroundTruthScene& scene, const Prediction& prediction,
                                     const LabelEmbeddings& embeddings, const PromptList& prompts,
                                     const PipelineOptions& options) {
  if (options.voxel_size <= 0.0) throw DomainError("voxel size must be positive");
  if (options.match_distance <= 0.0) throw DomainError("match distance must be positive");
  if (prediction.feature_row.size() != prediction.points.size()) {
    throw DomainError("prediction feature view does not cover its points");
  }
  ScenePipelineResult result;
  result.evaluated = downsample_scene(scene, options.voxel_size);

  std::vector<Point3> with_feature;
  std::vector<std::uint32_t> rows;
  for (std::size_t i = 0; i < prediction.points.size(); ++i) {
    if (prediction.feature_row[i] == Prediction::kNoFeature) continue;
    with_feature.push_back(prediction.points[i]);
    rows.push_back(prediction.feature_row[i]);
  }
  const std::vector<std::size_t> keep = voxel_downsample(with_feature, options.voxel_size);
  const std::vector<Point3> pred_points = gather<Point3>(with_feature, keep);
  const std::vector<std::uint32_t> pred_rows = gather<std::uint32_t>(rows, keep);

  result.matching = match_points(result.evaluated.points, pred_points, options.match_distance);
  const MatrixFeatures features(prediction.features, pred_rows);
  result.segmentation =
      evaluate_segmentation(result.evaluated, result.matching, features, embeddings, prompts,
                            options.segmentation, &result.categories);
  return result;
}

SceneRetrieval run_retrieval(const GroundTruthScene& scene, const std::vector<RetrievalQuery>& queries,
                             const Matrix& query_embeddings, const Prediction& prediction,
                             const RetrievalPipelineOptions& options) {
  if (prediction.mode != PredictionMode::kObject) {
    throw DomainError("retrieval needs an object-centric prediction");
  }
  if (query_embeddings.rows() != queries.size()) {
    throw DomainError("scene " + scene.name + ": " + std::to_string(queries.size()) + " queries but " +
                      std::to_string(query_embeddings.rows()) + " query embeddings");
  }
  std::vector<RetrievalQuery> kept;
  std::vector<float> rows;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    if (options.kind && queries[q].kind != *options.kind) continue;
    kept.push_back(queries[q]);
    const auto row = query_embeddings.row(q);
    rows.insert(rows.end(), row.begin(), row.end());
  }
  if (kept.empty()) throw DomainError("scene " + scene.name + " has no queries to evaluate");
  const LabelEmbeddings embeddings(Matrix(kept.size(), query_embeddings.cols(), std::move(rows)));
  if (options.nms_threshold) {
    const std::vector<PredictedInstance> survivors =
        nms(prediction.instances, prediction.points, *options.nms_threshold, options.retrieval.resolution);
    return evaluate_retrieval(scene, kept, embeddings, survivors, prediction.points, options.retrieval);
  }
  return evaluate_retrieval(scene, kept, embeddings, prediction.instances, prediction.points,
                            options.retrieval);
}

}  // namespace lexeval
