#include "lexeval/labels.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <unordered_set>

#include "lexeval/geometry.hpp"

namespace lexeval {
namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

InstanceId parse_instance(const std::string& text) {
  InstanceId id = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, id);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw DomainError("instance identifier '" + text + "' is not an integer");
  }
  return id;
}

void check_label(InstanceId id, const std::string& label) {
  if (label.empty() || normalize_label(label) != label) {
    throw DomainError("instance " + std::to_string(id) + ": label '" + label +
                      "' is not normalized");
  }
}

void check_disjoint(InstanceId id, const std::set<std::string>& a, const std::set<std::string>& b) {
  for (const auto& label : a) {
    if (b.contains(label)) {
      throw DomainError("instance " + std::to_string(id) + ": label '" + label +
                        "' appears in more than one category");
    }
  }
}

}  // namespace

void GroundTruthScene::validate() const {
  if (points.size() != instance_ids.size()) {
    throw DomainError("scene " + name + ": point and instance id counts differ");
  }
  std::set<InstanceId> present;
  for (const auto& [id, _] : labels) present.insert(id);
  present.insert(excluded.begin(), excluded.end());
  for (InstanceId id : instance_ids) {
    if (!present.contains(id)) {
      throw DomainError("scene " + name + ": unknown instance " + std::to_string(id) +
                        " in point stream");
    }
  }
  for (const auto& [id, set] : labels) {
    for (const auto* category : {&set.synonyms, &set.depictions, &set.visually_similar}) {
      for (const auto& label : *category) check_label(id, label);
    }
    check_disjoint(id, set.synonyms, set.depictions);
    check_disjoint(id, set.synonyms, set.visually_similar);
    check_disjoint(id, set.depictions, set.visually_similar);
    for (InstanceId other : set.clutter_ids) {
      if (other == id) {
        throw DomainError("scene " + name + ": instance " + std::to_string(id) +
                          " lists itself as clutter");
      }
      if (!present.contains(other)) {
        throw DomainError("scene " + name + ": instance " + std::to_string(id) +
                          " references clutter id " + std::to_string(other) +
                          " which is not in the scene");
      }
    }
  }
}

PromptList::PromptList(std::vector<std::string> labels) : labels_(std::move(labels)) {
  index_.reserve(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], i).second) {
      throw DomainError("duplicate prompt label '" + labels_[i] + "'");
    }
  }
}

std::optional<std::size_t> PromptList::find(std::string_view label) const {
  const auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t PromptList::index_of(std::string_view label) const {
  const auto i = find(label);
  if (!i) throw DomainError("label '" + std::string(label) + "' is not in the prompt list");
  return *i;
}

std::string normalize_label(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    const auto u = static_cast<unsigned char>(c);
    out.push_back(u < 0x80 && c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return out;
}

std::vector<std::string> split_response(std::string_view response) {
  std::vector<std::string> labels;
  std::size_t start = 0;
  while (start <= response.size()) {
    std::size_t comma = response.find(',', start);
    if (comma == std::string_view::npos) comma = response.size();
    std::string label = normalize_label(response.substr(start, comma - start));
    if (!label.empty()) labels.push_back(std::move(label));
    start = comma + 1;
  }
  return labels;
}

std::optional<CategoryLabelSet> curate_labels(std::span<const RawAnnotation> annotations) {
  CategoryLabelSet set;
  for (const RawAnnotation& a : annotations) {
    for (auto& l : split_response(a.synonyms)) set.synonyms.insert(std::move(l));
    for (auto& l : split_response(a.depictions)) set.depictions.insert(std::move(l));
    for (auto& l : split_response(a.vis_sim)) set.visually_similar.insert(std::move(l));
  }
  for (const auto& label : set.visually_similar) {
    set.synonyms.erase(label);
    set.depictions.erase(label);
  }
  for (const auto& label : set.depictions) set.synonyms.erase(label);
  if (set.label_count() == 0) return std::nullopt;
  return set;
}

bool flag_ambiguous(std::span<const RawAnnotation> annotations, int agreement_threshold) {
  std::map<std::string, std::set<std::string>> supporters;
  for (const RawAnnotation& a : annotations) {
    for (auto& label : split_response(a.synonyms)) supporters[label].insert(a.annotator);
  }
  std::size_t best = 0;
  for (const auto& [_, who] : supporters) best = std::max(best, who.size());
  return static_cast<long long>(best) < agreement_threshold;
}

CurationResult curate_scene(std::span<const RawAnnotation> annotations, int agreement_threshold) {
  std::map<InstanceId, std::vector<RawAnnotation>> by_instance;
  for (const RawAnnotation& a : annotations) by_instance[parse_instance(a.instance)].push_back(a);
  CurationResult result;
  for (const auto& [id, group] : by_instance) {
    auto curated = curate_labels(group);
    if (!curated) {
      result.unlabeled.insert(id);
      continue;
    }
    curated->ambiguous = flag_ambiguous(group, agreement_threshold);
    result.labels.emplace(id, std::move(*curated));
  }
  return result;
}

ClutterResult compute_clutter(const GroundTruthScene& scene, double min_extent) {
  std::map<InstanceId, std::vector<Point3>> members;
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const InstanceId id = scene.instance_ids[i];
    if (!scene.is_excluded(id)) members[id].push_back(scene.points[i]);
  }
  ClutterResult result;
  for (const auto& [id, _] : scene.labels) {
    if (!scene.is_excluded(id)) result.clutter[id];
  }

  std::vector<InstanceId> ids;
  std::vector<OrientedBox> boxes;
  for (const auto& [id, pts] : members) {
    const BoxFit fit = fit_oriented_box(pts, min_extent);
    if (fit.degenerate) {
      result.warnings.push_back("instance " + std::to_string(id) + ": " +
                                std::to_string(pts.size()) +
                                " points do not span a footprint; using a clamped box");
    }
    ids.push_back(id);
    boxes.push_back(fit.box);
    result.clutter[id];
  }

  const auto n = static_cast<std::int64_t>(boxes.size());
  std::vector<std::vector<std::uint8_t>> overlap(boxes.size(),
                                                 std::vector<std::uint8_t>(boxes.size(), 0));
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      overlap[i][j] = box_iou(boxes[i], boxes[j]) > 0.0 ? 1 : 0;
    }
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      if (overlap[i][j]) {
        result.clutter[ids[i]].insert(ids[j]);
        result.clutter[ids[j]].insert(ids[i]);
      }
    }
  }
  return result;
}

void apply_clutter(GroundTruthScene& scene, const ClutterResult& clutter) {
  for (auto& [id, set] : scene.labels) {
    const auto it = clutter.clutter.find(id);
    set.clutter_ids = it == clutter.clutter.end() ? std::set<InstanceId>{} : it->second;
  }
}

std::vector<std::string> scene_labels(const GroundTruthScene& scene) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& [_, set] : scene.labels) {
    for (const auto* category : {&set.synonyms, &set.depictions, &set.visually_similar}) {
      for (const auto& label : *category) {
        if (seen.insert(label).second) out.push_back(label);
      }
    }
  }
  return out;
}

PromptList build_prompt_list(std::span<const GroundTruthScene> scenes) {
  std::vector<std::string> labels;
  std::unordered_set<std::string> seen;
  for (const GroundTruthScene& scene : scenes) {
    for (auto& label : scene_labels(scene)) {
      if (seen.insert(label).second) labels.push_back(std::move(label));
    }
  }
  if (labels.empty()) throw DomainError("prompt list would be empty: no labels in any scene");
  return PromptList(std::move(labels));
}

LabelStats label_stats(const GroundTruthScene& scene) {
  LabelStats stats;
  std::size_t total = 0;
  for (const auto& [_, set] : scene.labels) {
    ++stats.objects;
    total += set.label_count();
    stats.max_labels_per_object = std::max(stats.max_labels_per_object, set.label_count());
    if (set.ambiguous) ++stats.ambiguous_objects;
  }
  stats.unique_labels = scene_labels(scene).size();
  if (stats.objects > 0) {
    stats.mean_labels_per_object = static_cast<double>(total) / static_cast<double>(stats.objects);
    stats.avg_labels_per_object = static_cast<std::size_t>(std::lround(stats.mean_labels_per_object));
  }
  return stats;
}

}  // namespace lexeval
