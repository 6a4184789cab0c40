#pragma once

// Tiered object labels: curation of raw annotator responses, ambiguity
// flagging, clutter neighbours, prompt lists and per-scene statistics.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lexeval/common.hpp"

namespace lexeval {

// Labels of one object, ordered from most to least specific category.
struct CategoryLabelSet {
  std::set<std::string> synonyms;
  std::set<std::string> depictions;
  std::set<std::string> visually_similar;
  std::set<InstanceId> clutter_ids;
  bool ambiguous = false;

  std::size_t label_count() const {
    return synonyms.size() + depictions.size() + visually_similar.size();
  }

  friend bool operator==(const CategoryLabelSet&, const CategoryLabelSet&) = default;
};

struct GroundTruthScene {
  std::string name;
  std::vector<Point3> points;
  std::vector<InstanceId> instance_ids;  // one per point
  std::map<InstanceId, CategoryLabelSet> labels;
  std::set<InstanceId> excluded;  // floors, walls, ceilings, unlabeled objects

  bool is_excluded(InstanceId id) const { return excluded.contains(id); }

  // Throws DomainError naming the offending instance when an invariant
  // (resolvable point instances, resolvable clutter ids, disjoint
  // categories, normalized label strings) does not hold.
  void validate() const;
};

// The ordered set of unique labels a representation is ranked against.
class PromptList {
 public:
  PromptList() = default;
  explicit PromptList(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& operator[](std::size_t i) const { return labels_[i]; }

  std::optional<std::size_t> find(std::string_view label) const;
  // Throws DomainError if the label is not in the list.
  std::size_t index_of(std::string_view label) const;

  friend bool operator==(const PromptList& a, const PromptList& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

// One annotator's free-text answers for one object. Each field holds a
// comma separated list.
struct RawAnnotation {
  std::string annotator;
  std::string instance;
  std::string synonyms;
  std::string depictions;
  std::string vis_sim;
};

// Trim, lowercase ASCII letters and collapse internal whitespace runs.
std::string normalize_label(std::string_view raw);

// Splits a comma separated response into normalized, non-empty labels.
std::vector<std::string> split_response(std::string_view response);

// Unions all annotators' responses per category. A label occurring in more
// than one category is kept only in the least specific one. Returns
// std::nullopt when every response is empty (object left unlabeled).
std::optional<CategoryLabelSet> curate_labels(std::span<const RawAnnotation> annotations);

inline constexpr int kDefaultAgreementThreshold = 2;

// True when no synonym is shared by at least `agreement_threshold`
// distinct annotators.
bool flag_ambiguous(std::span<const RawAnnotation> annotations,
                    int agreement_threshold = kDefaultAgreementThreshold);

struct CurationResult {
  std::map<InstanceId, CategoryLabelSet> labels;
  std::set<InstanceId> unlabeled;
};

// Groups a whole scene's annotations by instance and curates each object.
// Instance identifiers must be decimal integers.
CurationResult curate_scene(std::span<const RawAnnotation> annotations,
                            int agreement_threshold = kDefaultAgreementThreshold);

struct ClutterResult {
  std::map<InstanceId, std::set<InstanceId>> clutter;
  std::vector<std::string> warnings;  // degenerate instances that used a fallback box
};

// Neighbours whose oriented boxes overlap (IoU > 0). Excluded instances
// take no part. Symmetric by construction.
ClutterResult compute_clutter(const GroundTruthScene& scene,
                              double min_extent = kDefaultVoxelSize);

// Replaces every labeled instance's clutter set with the computed one.
void apply_clutter(GroundTruthScene& scene, const ClutterResult& clutter);

// Deduplicated union of all text labels in scene order, then ascending
// instance id, then synonyms / depictions / visually similar, each
// lexicographic. Throws DomainError if the union is empty.
PromptList build_prompt_list(std::span<const GroundTruthScene> scenes);

// Labels of one scene in prompt-list traversal order, deduplicated.
std::vector<std::string> scene_labels(const GroundTruthScene& scene);

struct LabelStats {
  std::size_t objects = 0;
  std::size_t unique_labels = 0;
  double mean_labels_per_object = 0.0;
  std::size_t avg_labels_per_object = 0;  // mean rounded to nearest integer
  std::size_t max_labels_per_object = 0;
  std::size_t ambiguous_objects = 0;

  friend bool operator==(const LabelStats&, const LabelStats&) = default;
};

LabelStats label_stats(const GroundTruthScene& scene);

}  // namespace lexeval
