#pragma once

// Tiered open-set segmentation metrics: per-point category assignment,
// object-normalized Top-N frequencies, set ranking scores with their
// under/overscoring penalties, and a closed-set mIoU baseline.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lexeval/geometry.hpp"
#include "lexeval/labels.hpp"
#include "lexeval/similarity.hpp"

namespace lexeval {

enum class Category : std::uint8_t {
  kSynonym = 0,
  kDepiction,
  kVisuallySimilar,
  kClutter,
  kMissing,
  kIncorrect,
};

inline constexpr std::size_t kCategoryCount = 6;
inline constexpr std::array<Category, kCategoryCount> kAllCategories = {
    Category::kSynonym, Category::kDepiction, Category::kVisuallySimilar,
    Category::kClutter, Category::kMissing,   Category::kIncorrect};

std::string_view category_name(Category c);
std::optional<Category> category_from_name(std::string_view name);

// Frequency per category, indexed by the Category value.
using Frequencies = std::array<double, kCategoryCount>;

// Prompt-list indices (sorted) of one object's labels and of all labels of
// its clutter neighbours.
struct PointLabelSets {
  std::vector<std::uint32_t> synonyms;
  std::vector<std::uint32_t> depictions;
  std::vector<std::uint32_t> visually_similar;
  std::vector<std::uint32_t> clutter;
};

// Throws DomainError if any label is missing from the prompt list.
PointLabelSets point_label_sets(const GroundTruthScene& scene, InstanceId instance,
                                const PromptList& prompts);

// First matching tier among the given labels; INCORRECT when none match.
Category assign_category(std::span<const std::uint32_t> top, const PointLabelSets& sets);

// 1-based inclusive ideal rank interval of a category set within a ranking
// of list_size labels.
struct RankBounds {
  std::size_t left = 1;
  std::size_t right = 1;
  std::size_t list_size = 1;
};

RankBounds synonym_bounds(std::size_t synonyms, std::size_t list_size);
RankBounds dvs_bounds(std::size_t synonyms, std::size_t dvs, std::size_t list_size);

// 1 + min(0, (r - left) / left): decays for ranks ahead of the interval.
double left_bound_term(std::size_t rank, const RankBounds& bounds);
// 1 - max(0, (r - right) / (|L| - right)); 1 when right == |L|.
double right_bound_term(std::size_t rank, const RankBounds& bounds);
// min of the two terms; 1 exactly inside the interval.
double rank_score(std::size_t rank, const RankBounds& bounds);

struct SetRankingScores {
  std::optional<double> mean_score;             // mR
  std::optional<double> synonym_inlier_rate;    // R_S
  std::optional<double> dvs_inlier_rate;        // R_DVS
  std::optional<double> synonym_under_penalty;  // P_S under
  std::optional<double> dvs_over_penalty;       // P_DVS over
  std::optional<double> dvs_under_penalty;      // P_DVS under

  friend bool operator==(const SetRankingScores&, const SetRankingScores&) = default;
};

struct SegmentationSummary {
  std::size_t objects = 0;
  std::size_t points = 0;
  std::size_t matched_points = 0;
  std::vector<Frequencies> frequencies;  // aligned with the report's top_n
  SetRankingScores ranking;
  std::optional<double> miou;

  friend bool operator==(const SegmentationSummary&, const SegmentationSummary&) = default;
};

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

// Raw accumulators behind a summary, kept for pooled (dataset-level)
// aggregation.
struct SegmentationSums {
  std::vector<Frequencies> object_fraction_sums;
  std::size_t objects = 0;
  double score_sum = 0.0;
  std::size_t score_points = 0;
  double synonym_inlier_sum = 0.0;
  double synonym_right_sum = 0.0;
  std::size_t synonym_points = 0;
  double dvs_inlier_sum = 0.0;
  double dvs_left_sum = 0.0;
  double dvs_right_sum = 0.0;
  std::size_t dvs_points = 0;
  std::map<std::uint32_t, ClassCounts> classes;
};

struct SceneSegmentation {
  std::string name;
  SegmentationSummary summary;
  SegmentationSums sums;
};

struct SegmentationOptions {
  std::vector<std::size_t> top_n{1, 5, 10};
  bool exclude_ambiguous = false;
  bool compute_miou = true;
};

// Categories of every evaluated ground-truth point, for visualization.
struct PointCategories {
  std::vector<std::size_t> points;       // ground-truth point indices
  std::vector<Category> categories;      // points.size() x top_n.size()
};

// Evaluates one scene. `scene` holds the evaluation points (already
// downsampled); `matching` maps them into the prediction cloud whose rows
// `features` provides. Parallel over points, deterministic for any thread
// count.
SceneSegmentation evaluate_segmentation(const GroundTruthScene& scene,
                                        const PointMatching& matching,
                                        const FeatureSource& features,
                                        const LabelEmbeddings& embeddings,
                                        const PromptList& prompts,
                                        const SegmentationOptions& options = {},
                                        PointCategories* categories = nullptr);

// Same metrics from explicit full rankings (one per ground-truth point;
// entries for unmatched points are ignored).
SceneSegmentation evaluate_segmentation(const GroundTruthScene& scene,
                                        const PointMatching& matching,
                                        std::span<const RankedLabelList> rankings,
                                        const PromptList& prompts,
                                        const SegmentationOptions& options = {});

Frequencies top_n_frequency(const GroundTruthScene& scene, const PointMatching& matching,
                            std::span<const RankedLabelList> rankings, const PromptList& prompts,
                            std::size_t n, const SegmentationOptions& options = {});

SetRankingScores set_ranking(const GroundTruthScene& scene, const PointMatching& matching,
                             std::span<const RankedLabelList> rankings, const PromptList& prompts,
                             const SegmentationOptions& options = {});

// Top-1 label against each object's primary class (its lexicographically
// smallest synonym), averaged over classes present in the ground truth.
std::optional<double> compute_miou(const GroundTruthScene& scene, const PointMatching& matching,
                                   std::span<const RankedLabelList> rankings,
                                   const PromptList& class_list,
                                   const SegmentationOptions& options = {});

inline constexpr int kSegmentationSchemaVersion = 1;

struct SegmentationReport {
  int version = kSegmentationSchemaVersion;
  std::vector<std::size_t> top_n;
  std::vector<std::pair<std::string, SegmentationSummary>> scenes;  // by name
  SegmentationSummary mean;    // unweighted mean over scenes
  SegmentationSummary pooled;  // objects and points pooled across scenes

  friend bool operator==(const SegmentationReport&, const SegmentationReport&) = default;
};

// Orders scenes by name and computes the mean and pooled summaries. All
// scenes must share the same top_n.
SegmentationReport make_segmentation_report(std::vector<SceneSegmentation> scenes,
                                             std::vector<std::size_t> top_n);

}  // namespace lexeval
