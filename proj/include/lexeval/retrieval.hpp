#pragma once

// Open-set object retrieval: query generation from label sets, similarity
// ranked instance matching, AP over IoU thresholds and query rank
// histograms.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lexeval/labels.hpp"
#include "lexeval/prediction.hpp"
#include "lexeval/similarity.hpp"

namespace lexeval {

enum class QueryKind : std::uint8_t { kSynonym = 0, kDepictionSynonym };

std::string_view query_kind_name(QueryKind kind);  // "S" or "S+D"
std::optional<QueryKind> query_kind_from_name(std::string_view name);

struct RetrievalQuery {
  std::string text;
  QueryKind kind = QueryKind::kSynonym;
  std::set<InstanceId> targets;

  friend bool operator==(const RetrievalQuery&, const RetrievalQuery&) = default;
};

// One S query per synonym and one "<depiction> <synonym>" query per pair of
// the same instance, over non-excluded labeled instances. Equal strings of
// one kind are merged with their targets unioned. Sorted by kind, then text.
std::vector<RetrievalQuery> generate_queries(const GroundTruthScene& scene,
                                             bool exclude_ambiguous = false);

// Greedy suppression by descending confidence (ties by input order): an
// instance is dropped when its voxel IoU with a kept one exceeds the
// threshold. Survivors keep their input order. Throws DomainError when a
// confidence is missing.
std::vector<PredictedInstance> nms(std::span<const PredictedInstance> instances,
                                   std::span<const Point3> cloud, double iou_threshold,
                                   double resolution = kDefaultVoxelSize);

std::vector<double> default_map_thresholds();  // 0.50, 0.55, ..., 0.95

// All-points interpolated AP of a ranked detection list: `hits[i]` tells
// whether detection i is a true positive.
double average_precision(std::span<const std::uint8_t> hits, std::size_t positives);

// Buckets: ranks 1..9, "10+", and no match at IoU 0.25.
inline constexpr std::size_t kRankBuckets = 11;
inline constexpr std::size_t kNoMatchBucket = 10;
using RankHistogram = std::array<std::size_t, kRankBuckets>;
std::string rank_bucket_name(std::size_t bucket);
std::size_t rank_bucket(std::optional<std::size_t> rank);

struct RetrievalOptions {
  std::vector<double> map_thresholds = default_map_thresholds();
  double resolution = kDefaultVoxelSize;
  // Predictions below this similarity are not retrieved.
  std::optional<double> min_similarity;
  // Pool detections across queries instead of averaging per query.
  bool pooled = false;
};

struct QueryOutcome {
  std::string text;
  QueryKind kind = QueryKind::kSynonym;
  std::size_t targets = 0;
  double map = 0.0;
  double ap50 = 0.0;
  double ap25 = 0.0;
  // 1-based similarity rank of the first prediction with IoU >= 0.25
  // against any target.
  std::optional<std::size_t> first_match_rank;
};

// A retrieved prediction for one query. Bit i of `hits` marks a true
// positive at evaluation threshold i (map thresholds, then 0.50, then
// 0.25).
struct Detection {
  float score = 0.0f;
  std::uint32_t query = 0;
  std::uint32_t rank = 0;
  std::uint32_t hits = 0;
};

struct SceneRetrieval {
  std::string name;
  std::vector<QueryOutcome> queries;
  std::vector<Detection> detections;  // by query, then rank
};

// Ranks every instance for every query by cosine similarity (ties to the
// lower instance index) and matches greedily in rank order: a prediction is
// a true positive at threshold t when its voxel IoU with a not yet matched
// target is >= t, taking the highest-IoU such target. Throws DomainError on
// zero queries or misaligned embeddings.
SceneRetrieval evaluate_retrieval(const GroundTruthScene& scene,
                                  std::span<const RetrievalQuery> queries,
                                  const LabelEmbeddings& query_embeddings,
                                  std::span<const PredictedInstance> instances,
                                  std::span<const Point3> cloud,
                                  const RetrievalOptions& options = {});

RankHistogram query_rank_counts(const SceneRetrieval& result);

struct ApSummary {
  std::size_t queries = 0;
  std::optional<double> map;
  std::optional<double> ap50;
  std::optional<double> ap25;

  friend bool operator==(const ApSummary&, const ApSummary&) = default;
};

struct RetrievalSummary {
  ApSummary overall;
  ApSummary synonym;
  ApSummary depiction_synonym;
  RankHistogram histogram{};

  friend bool operator==(const RetrievalSummary&, const RetrievalSummary&) = default;
};

inline constexpr int kRetrievalSchemaVersion = 1;

struct RetrievalReport {
  int version = kRetrievalSchemaVersion;
  bool pooled = false;
  std::vector<std::pair<std::string, RetrievalSummary>> scenes;  // by name
  RetrievalSummary mean;  // per-query means, then unweighted over scenes

  friend bool operator==(const RetrievalReport&, const RetrievalReport&) = default;
};

// Per-query mode: scene figures are means over queries, dataset figures
// means over scenes. Pooled mode: AP over the detections of all queries of
// a scene (or of all scenes for the dataset row).
RetrievalReport make_retrieval_report(std::vector<SceneRetrieval> scenes,
                                      const RetrievalOptions& options = {});

}  // namespace lexeval
