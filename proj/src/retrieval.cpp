#include "lexeval/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "lexeval/geometry.hpp"
#include "lexeval/kernels.hpp"

namespace lexeval {
namespace {

constexpr double kRankThreshold = 0.25;

std::vector<double> evaluation_thresholds(const RetrievalOptions& options) {
  if (options.map_thresholds.empty()) throw DomainError("no mAP thresholds given");
  std::vector<double> t = options.map_thresholds;
  t.push_back(0.50);
  t.push_back(0.25);
  if (t.size() > 32) throw DomainError("at most 30 mAP thresholds are supported");
  return t;
}

std::vector<Point3> instance_points(const PredictedInstance& inst, std::span<const Point3> cloud) {
  std::vector<Point3> out;
  out.reserve(inst.points.size());
  for (std::uint32_t i : inst.points) {
    if (i >= cloud.size()) {
      throw DomainError("instance " + std::to_string(inst.id) + " references point " +
                        std::to_string(i) + " outside the cloud");
    }
    out.push_back(cloud[i]);
  }
  return out;
}

struct Averages {
  double map = 0.0;
  double ap50 = 0.0;
  double ap25 = 0.0;
  std::size_t n = 0;

  void add(double m, double a50, double a25) {
    map += m;
    ap50 += a50;
    ap25 += a25;
    ++n;
  }
  ApSummary summary() const {
    ApSummary s;
    s.queries = n;
    if (n > 0) {
      const auto d = static_cast<double>(n);
      s.map = map / d;
      s.ap50 = ap50 / d;
      s.ap25 = ap25 / d;
    }
    return s;
  }
};

// AP of a pooled detection set at each evaluation threshold.
struct PooledAp {
  double map = 0.0;
  double ap50 = 0.0;
  double ap25 = 0.0;
};

PooledAp pooled_ap(std::vector<const Detection*> dets,
                   std::size_t positives, std::size_t map_count) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection* a, const Detection* b) { return a->score > b->score; });
  std::vector<std::uint8_t> hits(dets.size());
  const auto at = [&](std::size_t bit) {
    for (std::size_t i = 0; i < dets.size(); ++i) hits[i] = (dets[i]->hits >> bit) & 1u;
    return average_precision(hits, positives);
  };
  PooledAp out;
  for (std::size_t t = 0; t < map_count; ++t) out.map += at(t);
  out.map /= static_cast<double>(map_count);
  out.ap50 = at(map_count);
  out.ap25 = at(map_count + 1);
  return out;
}

// Pooled summary of the given scenes, optionally restricted to one kind.
ApSummary pooled_summary(std::span<const SceneRetrieval> scenes, std::optional<QueryKind> kind,
                         std::size_t map_count) {
  std::vector<const Detection*> dets;
  std::size_t positives = 0;
  std::size_t queries = 0;
  for (const SceneRetrieval& s : scenes) {
    for (const QueryOutcome& q : s.queries) {
      if (!kind || q.kind == *kind) {
        positives += q.targets;
        ++queries;
      }
    }
    for (const Detection& d : s.detections) {
      if (!kind || s.queries[d.query].kind == *kind) dets.push_back(&d);
    }
  }
  ApSummary out;
  out.queries = queries;
  if (queries == 0) return out;
  const PooledAp ap = pooled_ap(std::move(dets), positives, map_count);
  out.map = ap.map;
  out.ap50 = ap.ap50;
  out.ap25 = ap.ap25;
  return out;
}

RetrievalSummary per_query_summary(const SceneRetrieval& s) {
  Averages all, syn, dep;
  for (const QueryOutcome& q : s.queries) {
    all.add(q.map, q.ap50, q.ap25);
    (q.kind == QueryKind::kSynonym ? syn : dep).add(q.map, q.ap50, q.ap25);
  }
  RetrievalSummary out;
  out.overall = all.summary();
  out.synonym = syn.summary();
  out.depiction_synonym = dep.summary();
  out.histogram = query_rank_counts(s);
  return out;
}

}  // namespace

std::string_view query_kind_name(QueryKind kind) {
  return kind == QueryKind::kSynonym ? "S" : "S+D";
}

std::optional<QueryKind> query_kind_from_name(std::string_view name) {
  if (name == "S") return QueryKind::kSynonym;
  if (name == "S+D") return QueryKind::kDepictionSynonym;
  return std::nullopt;
}

std::vector<RetrievalQuery> generate_queries(const GroundTruthScene& scene, bool exclude_ambiguous) {
  std::map<std::pair<QueryKind, std::string>, std::set<InstanceId>> merged;
  for (const auto& [id, set] : scene.labels) {
    if (scene.is_excluded(id) || (exclude_ambiguous && set.ambiguous)) continue;
    for (const auto& synonym : set.synonyms) {
      merged[{QueryKind::kSynonym, synonym}].insert(id);
      for (const auto& depiction : set.depictions) {
        merged[{QueryKind::kDepictionSynonym, depiction + " " + synonym}].insert(id);
      }
    }
  }
  std::vector<RetrievalQuery> out;
  out.reserve(merged.size());
  for (auto& [key, targets] : merged) out.push_back({key.second, key.first, std::move(targets)});
  return out;
}

std::vector<PredictedInstance> nms(std::span<const PredictedInstance> instances,
                                   std::span<const Point3> cloud, double iou_threshold,
                                   double resolution) {
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  for (const PredictedInstance& inst : instances) {
    if (!inst.confidence) {
      throw DomainError("instance " + std::to_string(inst.id) + " has no confidence for NMS");
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return *instances[a].confidence > *instances[b].confidence;
  });
  std::vector<std::vector<VoxelKey>> voxels(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    voxels[i] = voxel_set(instance_points(instances[i], cloud), resolution);
  }
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return voxel_set_iou(voxels[i], voxels[k]) > iou_threshold;
    });
    if (!suppressed) kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());
  std::vector<PredictedInstance> out;
  out.reserve(kept.size());
  for (std::size_t i : kept) out.push_back(instances[i]);
  return out;
}

std::vector<double> default_map_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

double average_precision(std::span<const std::uint8_t> hits, std::size_t positives) {
  if (positives == 0) return 0.0;
  const std::size_t n = hits.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(positives);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] != prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

std::string rank_bucket_name(std::size_t bucket) {
  if (bucket < 9) return std::to_string(bucket + 1);
  if (bucket == 9) return "10+";
  return "no_match";
}

std::size_t rank_bucket(std::optional<std::size_t> rank) {
  if (!rank) return kNoMatchBucket;
  return std::min<std::size_t>(*rank, 10) - 1;
}

SceneRetrieval evaluate_retrieval(const GroundTruthScene& scene,
                                  std::span<const RetrievalQuery> queries,
                                  const LabelEmbeddings& query_embeddings,
                                  std::span<const PredictedInstance> instances,
                                  std::span<const Point3> cloud, const RetrievalOptions& options) {
  if (queries.empty()) throw DomainError("scene " + scene.name + ": no retrieval queries");
  if (query_embeddings.size() != queries.size()) {
    throw DomainError("scene " + scene.name + ": " + std::to_string(query_embeddings.size()) +
                      " query embeddings for " + std::to_string(queries.size()) + " queries");
  }
  const std::vector<double> thresholds = evaluation_thresholds(options);
  const std::size_t map_count = options.map_thresholds.size();
  const std::size_t padded = query_embeddings.padded_dim();

  // Ground-truth voxel sets of every target.
  std::map<InstanceId, std::vector<Point3>> gt_points;
  for (const RetrievalQuery& q : queries) {
    if (q.targets.empty()) throw DomainError("query '" + q.text + "' has no targets");
    for (InstanceId t : q.targets) gt_points[t];
  }
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const auto it = gt_points.find(scene.instance_ids[i]);
    if (it != gt_points.end()) it->second.push_back(scene.points[i]);
  }
  std::vector<InstanceId> target_ids;
  std::vector<std::vector<VoxelKey>> target_voxels;
  for (const auto& [id, pts] : gt_points) {
    if (pts.empty()) {
      throw DomainError("scene " + scene.name + ": query target " + std::to_string(id) +
                        " has no points");
    }
    target_ids.push_back(id);
    target_voxels.push_back(voxel_set(pts, options.resolution));
  }

  const std::size_t n_inst = instances.size();
  std::vector<float> inst_normalized(n_inst * padded, 0.0f);
  std::vector<std::vector<VoxelKey>> inst_voxels(n_inst);
  for (std::size_t k = 0; k < n_inst; ++k) {
    if (instances[k].feature.size() != query_embeddings.dim()) {
      throw DomainError("instance " + std::to_string(instances[k].id) + " feature dimension " +
                        std::to_string(instances[k].feature.size()) +
                        " does not match query embedding dimension " +
                        std::to_string(query_embeddings.dim()));
    }
    kernels::normalize_row(instances[k].feature, {inst_normalized.data() + k * padded, padded});
    inst_voxels[k] = voxel_set(instance_points(instances[k], cloud), options.resolution);
  }
  // IoU of every instance with every target, row per instance.
  const std::size_t n_targets = target_ids.size();
  std::vector<double> iou(n_inst * n_targets);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(n_inst); ++k) {
    for (std::size_t t = 0; t < n_targets; ++t) {
      iou[static_cast<std::size_t>(k) * n_targets + t] =
          voxel_set_iou(inst_voxels[static_cast<std::size_t>(k)], target_voxels[t]);
    }
  }

  SceneRetrieval out;
  out.name = scene.name;
  out.queries.resize(queries.size());
  std::vector<std::vector<Detection>> per_query(queries.size());

#pragma omp parallel
  {
    std::vector<float> sims(n_inst);
    std::vector<std::uint32_t> order(n_inst);
    std::vector<std::size_t> local;  // target slots of the query
    std::vector<std::uint8_t> used;
    std::vector<std::uint8_t> hits;
#pragma omp for schedule(dynamic, 1)
    for (std::int64_t qi = 0; qi < static_cast<std::int64_t>(queries.size()); ++qi) {
      const auto q = static_cast<std::size_t>(qi);
      const RetrievalQuery& query = queries[q];
      for (std::size_t k = 0; k < n_inst; ++k) {
        sims[k] = kernels::dot(query_embeddings.row(q), inst_normalized.data() + k * padded, padded);
      }
      std::iota(order.begin(), order.end(), 0u);
      std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return a < b;
      });
      std::size_t retrieved = n_inst;
      if (options.min_similarity) {
        retrieved = static_cast<std::size_t>(
            std::find_if(order.begin(), order.end(),
                         [&](std::uint32_t k) { return sims[k] < *options.min_similarity; }) -
            order.begin());
      }
      local.clear();
      for (InstanceId t : query.targets) {
        local.push_back(static_cast<std::size_t>(
            std::lower_bound(target_ids.begin(), target_ids.end(), t) - target_ids.begin()));
      }

      std::vector<Detection>& dets = per_query[q];
      dets.resize(retrieved);
      for (std::size_t r = 0; r < retrieved; ++r) {
        dets[r] = Detection{sims[order[r]], static_cast<std::uint32_t>(q),
                            static_cast<std::uint32_t>(r + 1), 0};
      }
      QueryOutcome& outcome = out.queries[q];
      outcome.text = query.text;
      outcome.kind = query.kind;
      outcome.targets = query.targets.size();
      hits.resize(retrieved);
      for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
        const double t = thresholds[ti];
        used.assign(local.size(), 0);
        for (std::size_t r = 0; r < retrieved; ++r) {
          const double* row = iou.data() + order[r] * n_targets;
          std::size_t best = local.size();
          for (std::size_t j = 0; j < local.size(); ++j) {
            if (used[j] || row[local[j]] < t) continue;
            if (best == local.size() || row[local[j]] > row[local[best]]) best = j;
          }
          hits[r] = best != local.size();
          if (hits[r]) {
            used[best] = 1;
            dets[r].hits |= 1u << ti;
          }
        }
        const double ap = average_precision(hits, local.size());
        if (ti < map_count) {
          outcome.map += ap;
        } else if (ti == map_count) {
          outcome.ap50 = ap;
        } else {
          outcome.ap25 = ap;
        }
      }
      outcome.map /= static_cast<double>(map_count);
      for (std::size_t r = 0; r < retrieved && !outcome.first_match_rank; ++r) {
        const double* row = iou.data() + order[r] * n_targets;
        for (std::size_t j : local) {
          if (row[j] >= kRankThreshold) {
            outcome.first_match_rank = r + 1;
            break;
          }
        }
      }
    }
  }
  for (auto& dets : per_query) {
    out.detections.insert(out.detections.end(), dets.begin(), dets.end());
  }
  return out;
}

RankHistogram query_rank_counts(const SceneRetrieval& result) {
  RankHistogram h{};
  for (const QueryOutcome& q : result.queries) ++h[rank_bucket(q.first_match_rank)];
  return h;
}

RetrievalReport make_retrieval_report(std::vector<SceneRetrieval> scenes,
                                      const RetrievalOptions& options) {
  std::sort(scenes.begin(), scenes.end(),
            [](const SceneRetrieval& a, const SceneRetrieval& b) { return a.name < b.name; });
  const std::size_t map_count = options.map_thresholds.size();
  RetrievalReport report;
  report.pooled = options.pooled;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (i > 0 && scenes[i - 1].name == scenes[i].name) {
      throw DomainError("duplicate scene '" + scenes[i].name + "'");
    }
    RetrievalSummary s;
    if (options.pooled) {
      const std::span<const SceneRetrieval> one(&scenes[i], 1);
      s.overall = pooled_summary(one, std::nullopt, map_count);
      s.synonym = pooled_summary(one, QueryKind::kSynonym, map_count);
      s.depiction_synonym = pooled_summary(one, QueryKind::kDepictionSynonym, map_count);
      s.histogram = query_rank_counts(scenes[i]);
    } else {
      s = per_query_summary(scenes[i]);
    }
    report.scenes.emplace_back(scenes[i].name, s);
  }

  RetrievalSummary& mean = report.mean;
  for (const auto& [_, s] : report.scenes) {
    for (std::size_t b = 0; b < kRankBuckets; ++b) mean.histogram[b] += s.histogram[b];
  }
  if (options.pooled) {
    mean.overall = pooled_summary(scenes, std::nullopt, map_count);
    mean.synonym = pooled_summary(scenes, QueryKind::kSynonym, map_count);
    mean.depiction_synonym = pooled_summary(scenes, QueryKind::kDepictionSynonym, map_count);
    return report;
  }
  const auto scene_mean = [&](ApSummary RetrievalSummary::*field) {
    Averages a;
    std::size_t queries = 0;
    for (const auto& [_, s] : report.scenes) {
      const ApSummary& v = s.*field;
      queries += v.queries;
      if (v.map) a.add(*v.map, *v.ap50, *v.ap25);
    }
    ApSummary out = a.summary();
    out.queries = queries;
    return out;
  };
  mean.overall = scene_mean(&RetrievalSummary::overall);
  mean.synonym = scene_mean(&RetrievalSummary::synonym);
  mean.depiction_synonym = scene_mean(&RetrievalSummary::depiction_synonym);
  return report;
}

}  // namespace lexeval
