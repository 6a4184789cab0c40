#include "lexeval/seg_metrics.hpp"

#include <algorithm>
#include <numeric>

#include "lexeval/kernels.hpp"

namespace lexeval {
namespace {

constexpr std::size_t kPointBatch = 64;

struct ObjectPlan {
  InstanceId id = 0;
  PointLabelSets sets;
  std::vector<std::uint32_t> dvs;  // depictions and visually similar
  std::optional<std::uint32_t> primary_class;
  std::size_t points = 0;
};

struct ScenePlan {
  std::vector<ObjectPlan> objects;        // ascending instance id
  std::vector<std::size_t> eval_points;   // ground-truth indices, ascending
  std::vector<std::size_t> point_object;  // object slot per evaluated point
  std::size_t max_n = 0;
};

// Per matched point; fractions are already normalized by the set sizes.
struct PointOutcome {
  std::uint32_t top1 = 0;
  bool has_score = false;
  bool has_synonyms = false;
  bool has_dvs = false;
  double score = 0.0;
  double synonym_inlier = 0.0;
  double synonym_right = 0.0;
  double dvs_inlier = 0.0;
  double dvs_left = 0.0;
  double dvs_right = 0.0;
};

bool is_evaluated(const GroundTruthScene& scene, InstanceId id, const SegmentationOptions& options) {
  if (scene.is_excluded(id)) return false;
  const auto it = scene.labels.find(id);
  if (it == scene.labels.end()) return false;
  return !(options.exclude_ambiguous && it->second.ambiguous);
}

std::vector<std::uint32_t> indices_of(const std::set<std::string>& labels, const PromptList& prompts,
                                      InstanceId id) {
  std::vector<std::uint32_t> out;
  out.reserve(labels.size());
  for (const auto& label : labels) {
    const auto i = prompts.find(label);
    if (!i) {
      throw DomainError("instance " + std::to_string(id) + ": label '" + label +
                        "' is not in the prompt list");
    }
    out.push_back(static_cast<std::uint32_t>(*i));
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool contains(const std::vector<std::uint32_t>& sorted, std::uint32_t v) {
  return std::binary_search(sorted.begin(), sorted.end(), v);
}

ScenePlan make_plan(const GroundTruthScene& scene, const PromptList& prompts,
                    const SegmentationOptions& options) {
  if (options.top_n.empty()) throw DomainError("no top-n values requested");
  for (std::size_t n : options.top_n) {
    if (n < 1 || n > prompts.size()) {
      throw DomainError("top-n of " + std::to_string(n) + " is outside [1, " +
                        std::to_string(prompts.size()) + "]");
    }
  }
  if (scene.instance_ids.size() != scene.points.size()) {
    throw DomainError("scene " + scene.name + ": point and instance id counts differ");
  }
  ScenePlan plan;
  plan.max_n = *std::max_element(options.top_n.begin(), options.top_n.end());

  std::map<InstanceId, std::size_t> counts;
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const InstanceId id = scene.instance_ids[i];
    if (is_evaluated(scene, id, options)) ++counts[id];
  }
  std::map<InstanceId, std::size_t> slot;
  for (const auto& [id, count] : counts) {
    ObjectPlan object;
    object.id = id;
    object.points = count;
    object.sets = point_label_sets(scene, id, prompts);
    object.dvs = object.sets.depictions;
    object.dvs.insert(object.dvs.end(), object.sets.visually_similar.begin(),
                      object.sets.visually_similar.end());
    std::sort(object.dvs.begin(), object.dvs.end());
    const auto& synonyms = scene.labels.at(id).synonyms;
    if (!synonyms.empty()) {
      object.primary_class = static_cast<std::uint32_t>(prompts.index_of(*synonyms.begin()));
    }
    slot[id] = plan.objects.size();
    plan.objects.push_back(std::move(object));
  }
  if (plan.objects.empty()) {
    throw DomainError("scene " + scene.name + " has no evaluable objects");
  }
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const auto it = slot.find(scene.instance_ids[i]);
    if (it == slot.end()) continue;
    plan.eval_points.push_back(i);
    plan.point_object.push_back(it->second);
  }
  return plan;
}

template <typename RankOf>
void score_point(const ObjectPlan& object, std::size_t list_size, RankOf rank_of,
                 PointOutcome& out) {
  const std::size_t ns = object.sets.synonyms.size();
  const std::size_t nd = object.dvs.size();
  const RankBounds sb = synonym_bounds(ns, list_size);
  const RankBounds db = dvs_bounds(ns, nd, list_size);
  double score_sum = 0.0;
  std::size_t syn_in = 0;
  double syn_right = 0.0;
  for (std::uint32_t label : object.sets.synonyms) {
    const std::size_t r = rank_of(label);
    const double left = left_bound_term(r, sb);
    const double right = right_bound_term(r, sb);
    score_sum += std::min(left, right);
    syn_right += right;
    if (r >= sb.left && r <= sb.right) ++syn_in;
  }
  std::size_t dvs_in = 0;
  double dvs_left = 0.0;
  double dvs_right = 0.0;
  for (std::uint32_t label : object.dvs) {
    const std::size_t r = rank_of(label);
    const double left = left_bound_term(r, db);
    const double right = right_bound_term(r, db);
    score_sum += std::min(left, right);
    dvs_left += left;
    dvs_right += right;
    if (r >= db.left && r <= db.right) ++dvs_in;
  }
  out.has_score = ns + nd > 0;
  if (out.has_score) out.score = score_sum / static_cast<double>(ns + nd);
  out.has_synonyms = ns > 0;
  if (out.has_synonyms) {
    out.synonym_inlier = static_cast<double>(syn_in) / static_cast<double>(ns);
    out.synonym_right = syn_right / static_cast<double>(ns);
  }
  out.has_dvs = nd > 0;
  if (out.has_dvs) {
    out.dvs_inlier = static_cast<double>(dvs_in) / static_cast<double>(nd);
    out.dvs_left = dvs_left / static_cast<double>(nd);
    out.dvs_right = dvs_right / static_cast<double>(nd);
  }
}

std::optional<double> ratio(double sum, std::size_t count) {
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

std::optional<double> inverse(std::optional<double> v) {
  if (!v) return std::nullopt;
  return 1.0 - *v;
}

std::optional<double> miou_from(const std::map<std::uint32_t, ClassCounts>& classes) {
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& [_, c] : classes) {
    if (c.tp + c.fn == 0) continue;
    sum += static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn);
    ++present;
  }
  return ratio(sum, present);
}

SegmentationSummary summarize(const SegmentationSums& sums, std::size_t points,
                              std::size_t matched, bool with_miou) {
  SegmentationSummary s;
  s.objects = sums.objects;
  s.points = points;
  s.matched_points = matched;
  for (const Frequencies& f : sums.object_fraction_sums) {
    Frequencies out{};
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      out[c] = f[c] / static_cast<double>(sums.objects);
    }
    s.frequencies.push_back(out);
  }
  s.ranking.mean_score = ratio(sums.score_sum, sums.score_points);
  s.ranking.synonym_inlier_rate = ratio(sums.synonym_inlier_sum, sums.synonym_points);
  s.ranking.synonym_under_penalty = inverse(ratio(sums.synonym_right_sum, sums.synonym_points));
  s.ranking.dvs_inlier_rate = ratio(sums.dvs_inlier_sum, sums.dvs_points);
  s.ranking.dvs_over_penalty = inverse(ratio(sums.dvs_left_sum, sums.dvs_points));
  s.ranking.dvs_under_penalty = inverse(ratio(sums.dvs_right_sum, sums.dvs_points));
  if (with_miou) s.miou = miou_from(sums.classes);
  return s;
}

SceneSegmentation assemble(const GroundTruthScene& scene, const ScenePlan& plan,
                           const PointMatching& matching, const std::vector<Category>& categories,
                           const std::vector<PointOutcome>& outcomes,
                           const SegmentationOptions& options) {
  const std::size_t nn = options.top_n.size();
  std::vector<std::vector<std::array<std::size_t, kCategoryCount>>> counts(
      plan.objects.size(), std::vector<std::array<std::size_t, kCategoryCount>>(nn));
  SegmentationSums sums;
  sums.objects = plan.objects.size();
  sums.object_fraction_sums.assign(nn, Frequencies{});
  std::size_t matched = 0;

  for (std::size_t e = 0; e < plan.eval_points.size(); ++e) {
    const std::size_t obj = plan.point_object[e];
    for (std::size_t k = 0; k < nn; ++k) {
      ++counts[obj][k][static_cast<std::size_t>(categories[e * nn + k])];
    }
    const std::optional<std::uint32_t> truth = plan.objects[obj].primary_class;
    if (!matching.is_matched(plan.eval_points[e])) {
      if (options.compute_miou && truth) ++sums.classes[*truth].fn;
      continue;
    }
    ++matched;
    const PointOutcome& o = outcomes[e];
    if (o.has_score) {
      sums.score_sum += o.score;
      ++sums.score_points;
    }
    if (o.has_synonyms) {
      sums.synonym_inlier_sum += o.synonym_inlier;
      sums.synonym_right_sum += o.synonym_right;
      ++sums.synonym_points;
    }
    if (o.has_dvs) {
      sums.dvs_inlier_sum += o.dvs_inlier;
      sums.dvs_left_sum += o.dvs_left;
      sums.dvs_right_sum += o.dvs_right;
      ++sums.dvs_points;
    }
    if (options.compute_miou) {
      if (truth && *truth == o.top1) {
        ++sums.classes[o.top1].tp;
      } else {
        if (truth) ++sums.classes[*truth].fn;
        ++sums.classes[o.top1].fp;
      }
    }
  }
  for (std::size_t obj = 0; obj < plan.objects.size(); ++obj) {
    const auto n = static_cast<double>(plan.objects[obj].points);
    for (std::size_t k = 0; k < nn; ++k) {
      for (std::size_t c = 0; c < kCategoryCount; ++c) {
        sums.object_fraction_sums[k][c] += static_cast<double>(counts[obj][k][c]) / n;
      }
    }
  }
  SceneSegmentation out;
  out.name = scene.name;
  out.summary = summarize(sums, plan.eval_points.size(), matched, options.compute_miou);
  out.sums = std::move(sums);
  return out;
}

void check_matching(const GroundTruthScene& scene, const PointMatching& matching) {
  if (matching.matched.size() != scene.points.size()) {
    throw DomainError("scene " + scene.name + ": matching covers " +
                      std::to_string(matching.matched.size()) + " points, scene has " +
                      std::to_string(scene.points.size()));
  }
}

}  // namespace

std::string_view category_name(Category c) {
  switch (c) {
    case Category::kSynonym: return "synonym";
    case Category::kDepiction: return "depiction";
    case Category::kVisuallySimilar: return "visually_similar";
    case Category::kClutter: return "clutter";
    case Category::kMissing: return "missing";
    case Category::kIncorrect: return "incorrect";
  }
  return "unknown";
}

std::optional<Category> category_from_name(std::string_view name) {
  for (Category c : kAllCategories) {
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

PointLabelSets point_label_sets(const GroundTruthScene& scene, InstanceId instance,
                                const PromptList& prompts) {
  const auto it = scene.labels.find(instance);
  if (it == scene.labels.end()) {
    throw DomainError("instance " + std::to_string(instance) + " has no labels");
  }
  const CategoryLabelSet& own = it->second;
  PointLabelSets sets;
  sets.synonyms = indices_of(own.synonyms, prompts, instance);
  sets.depictions = indices_of(own.depictions, prompts, instance);
  sets.visually_similar = indices_of(own.visually_similar, prompts, instance);
  for (InstanceId neighbour : own.clutter_ids) {
    const auto nit = scene.labels.find(neighbour);
    if (nit == scene.labels.end()) continue;
    for (const auto* category :
         {&nit->second.synonyms, &nit->second.depictions, &nit->second.visually_similar}) {
      const auto idx = indices_of(*category, prompts, neighbour);
      sets.clutter.insert(sets.clutter.end(), idx.begin(), idx.end());
    }
  }
  std::sort(sets.clutter.begin(), sets.clutter.end());
  sets.clutter.erase(std::unique(sets.clutter.begin(), sets.clutter.end()), sets.clutter.end());
  return sets;
}

Category assign_category(std::span<const std::uint32_t> top, const PointLabelSets& sets) {
  const auto any_in = [&](const std::vector<std::uint32_t>& set) {
    return std::any_of(top.begin(), top.end(), [&](std::uint32_t l) { return contains(set, l); });
  };
  if (any_in(sets.synonyms)) return Category::kSynonym;
  if (any_in(sets.depictions)) return Category::kDepiction;
  if (any_in(sets.visually_similar)) return Category::kVisuallySimilar;
  if (any_in(sets.clutter)) return Category::kClutter;
  return Category::kIncorrect;
}

RankBounds synonym_bounds(std::size_t synonyms, std::size_t list_size) {
  return RankBounds{1, std::max<std::size_t>(synonyms, 1), list_size};
}

RankBounds dvs_bounds(std::size_t synonyms, std::size_t dvs, std::size_t list_size) {
  return RankBounds{synonyms + 1, synonyms + std::max<std::size_t>(dvs, 1), list_size};
}

double left_bound_term(std::size_t rank, const RankBounds& b) {
  const double r = static_cast<double>(rank);
  const double l = static_cast<double>(b.left);
  return 1.0 + std::min(0.0, (r - l) / l);
}

double right_bound_term(std::size_t rank, const RankBounds& b) {
  if (b.right >= b.list_size) return 1.0;
  const double r = static_cast<double>(rank);
  const double right = static_cast<double>(b.right);
  return 1.0 - std::max(0.0, (r - right) / (static_cast<double>(b.list_size) - right));
}

double rank_score(std::size_t rank, const RankBounds& bounds) {
  return std::min(left_bound_term(rank, bounds), right_bound_term(rank, bounds));
}

SceneSegmentation evaluate_segmentation(const GroundTruthScene& scene,
                                        const PointMatching& matching,
                                        const FeatureSource& features,
                                        const LabelEmbeddings& embeddings,
                                        const PromptList& prompts,
                                        const SegmentationOptions& options,
                                        PointCategories* point_categories) {
  check_matching(scene, matching);
  if (embeddings.size() != prompts.size()) {
    throw DomainError("label embeddings have " + std::to_string(embeddings.size()) +
                      " rows, prompt list has " + std::to_string(prompts.size()) + " labels");
  }
  if (features.rows() > 0 && features.dim() != embeddings.dim()) {
    throw DomainError("feature dimension " + std::to_string(features.dim()) +
                      " does not match embedding dimension " + std::to_string(embeddings.dim()));
  }
  const ScenePlan plan = make_plan(scene, prompts, options);
  const std::size_t nn = options.top_n.size();
  const std::size_t labels = prompts.size();
  const std::size_t padded = embeddings.padded_dim();

  std::vector<Category> categories(plan.eval_points.size() * nn, Category::kMissing);
  std::vector<PointOutcome> outcomes(plan.eval_points.size());
  std::vector<std::size_t> work;  // evaluated-point positions with a match
  for (std::size_t e = 0; e < plan.eval_points.size(); ++e) {
    const std::uint32_t m = matching.matched[plan.eval_points[e]];
    if (m == PointMatching::kMissing) continue;
    if (m >= features.rows()) {
      throw DomainError("matching references prediction point " + std::to_string(m) +
                        " beyond the feature rows");
    }
    work.push_back(e);
  }

  const auto batches = static_cast<std::int64_t>((work.size() + kPointBatch - 1) / kPointBatch);
#pragma omp parallel
  {
    std::vector<float> normalized(kPointBatch * padded);
    std::vector<float> sims(kPointBatch * labels);
    std::vector<std::uint32_t> top(plan.max_n);
    std::vector<std::size_t> rows;
#pragma omp for schedule(dynamic, 1)
    for (std::int64_t b = 0; b < batches; ++b) {
      const std::size_t begin = static_cast<std::size_t>(b) * kPointBatch;
      const std::size_t count = std::min(kPointBatch, work.size() - begin);
      rows.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        rows[i] = matching.matched[plan.eval_points[work[begin + i]]];
      }
      load_normalized(features, rows, padded, normalized.data(), nullptr);
      kernels::similarity_block(normalized.data(), count, embeddings.data(), labels, padded,
                                sims.data());
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t e = work[begin + i];
        const ObjectPlan& object = plan.objects[plan.point_object[e]];
        const std::span<const float> s(sims.data() + i * labels, labels);
        kernels::top_k(s, plan.max_n, top.data());
        for (std::size_t k = 0; k < nn; ++k) {
          categories[e * nn + k] =
              assign_category(std::span<const std::uint32_t>(top.data(), options.top_n[k]), object.sets);
        }
        PointOutcome& o = outcomes[e];
        o.top1 = top[0];
        score_point(object, labels, [&](std::uint32_t label) { return kernels::label_rank(s, label); },
                    o);
      }
    }
  }

  if (point_categories != nullptr) {
    point_categories->points = plan.eval_points;
    point_categories->categories = categories;
  }
  return assemble(scene, plan, matching, categories, outcomes, options);
}

SceneSegmentation evaluate_segmentation(const GroundTruthScene& scene,
                                        const PointMatching& matching,
                                        std::span<const RankedLabelList> rankings,
                                        const PromptList& prompts,
                                        const SegmentationOptions& options) {
  check_matching(scene, matching);
  if (rankings.size() != scene.points.size()) {
    throw DomainError("expected one ranking per ground-truth point");
  }
  const ScenePlan plan = make_plan(scene, prompts, options);
  const std::size_t nn = options.top_n.size();
  const std::size_t labels = prompts.size();
  std::vector<Category> categories(plan.eval_points.size() * nn, Category::kMissing);
  std::vector<PointOutcome> outcomes(plan.eval_points.size());
  std::vector<std::size_t> position(labels);
  for (std::size_t e = 0; e < plan.eval_points.size(); ++e) {
    const std::size_t g = plan.eval_points[e];
    if (!matching.is_matched(g)) continue;
    const RankedLabelList& ranked = rankings[g];
    if (ranked.order.size() != labels) {
      throw DomainError("ranking of point " + std::to_string(g) + " has " +
                        std::to_string(ranked.order.size()) + " entries, expected " +
                        std::to_string(labels));
    }
    const ObjectPlan& object = plan.objects[plan.point_object[e]];
    for (std::size_t k = 0; k < nn; ++k) {
      categories[e * nn + k] = assign_category(
          std::span<const std::uint32_t>(ranked.order.data(), options.top_n[k]), object.sets);
    }
    for (std::size_t k = 0; k < labels; ++k) position[ranked.order[k]] = k + 1;
    outcomes[e].top1 = ranked.order[0];
    score_point(object, labels, [&](std::uint32_t label) { return position[label]; }, outcomes[e]);
  }
  return assemble(scene, plan, matching, categories, outcomes, options);
}

Frequencies top_n_frequency(const GroundTruthScene& scene, const PointMatching& matching,
                            std::span<const RankedLabelList> rankings, const PromptList& prompts,
                            std::size_t n, const SegmentationOptions& options) {
  SegmentationOptions single = options;
  single.top_n = {n};
  single.compute_miou = false;
  return evaluate_segmentation(scene, matching, rankings, prompts, single).summary.frequencies[0];
}

SetRankingScores set_ranking(const GroundTruthScene& scene, const PointMatching& matching,
                             std::span<const RankedLabelList> rankings, const PromptList& prompts,
                             const SegmentationOptions& options) {
  SegmentationOptions single = options;
  single.top_n = {1};
  single.compute_miou = false;
  return evaluate_segmentation(scene, matching, rankings, prompts, single).summary.ranking;
}

std::optional<double> compute_miou(const GroundTruthScene& scene, const PointMatching& matching,
                                   std::span<const RankedLabelList> rankings,
                                   const PromptList& class_list,
                                   const SegmentationOptions& options) {
  SegmentationOptions single = options;
  single.top_n = {1};
  single.compute_miou = true;
  return evaluate_segmentation(scene, matching, rankings, class_list, single).summary.miou;
}

SegmentationReport make_segmentation_report(std::vector<SceneSegmentation> scenes,
                                            std::vector<std::size_t> top_n) {
  std::sort(scenes.begin(), scenes.end(),
            [](const SceneSegmentation& a, const SceneSegmentation& b) { return a.name < b.name; });
  SegmentationReport report;
  report.top_n = std::move(top_n);
  const std::size_t nn = report.top_n.size();

  SegmentationSums pooled;
  pooled.object_fraction_sums.assign(nn, Frequencies{});
  std::size_t points = 0;
  std::size_t matched = 0;
  bool any_miou = false;

  std::vector<Frequencies> freq_sum(nn, Frequencies{});
  struct Mean {
    double sum = 0.0;
    std::size_t count = 0;
    void add(const std::optional<double>& v) {
      if (v) {
        sum += *v;
        ++count;
      }
    }
    std::optional<double> get() const { return ratio(sum, count); }
  };
  Mean mr, rs, rdvs, ps, pdo, pdu, miou;

  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const SceneSegmentation& s = scenes[i];
    if (i > 0 && scenes[i - 1].name == s.name) throw DomainError("duplicate scene '" + s.name + "'");
    if (s.summary.frequencies.size() != nn) {
      throw DomainError("scene " + s.name + " was evaluated with different top-n values");
    }
    report.scenes.emplace_back(s.name, s.summary);
    for (std::size_t k = 0; k < nn; ++k) {
      for (std::size_t c = 0; c < kCategoryCount; ++c) {
        freq_sum[k][c] += s.summary.frequencies[k][c];
        pooled.object_fraction_sums[k][c] += s.sums.object_fraction_sums[k][c];
      }
    }
    mr.add(s.summary.ranking.mean_score);
    rs.add(s.summary.ranking.synonym_inlier_rate);
    rdvs.add(s.summary.ranking.dvs_inlier_rate);
    ps.add(s.summary.ranking.synonym_under_penalty);
    pdo.add(s.summary.ranking.dvs_over_penalty);
    pdu.add(s.summary.ranking.dvs_under_penalty);
    miou.add(s.summary.miou);
    any_miou = any_miou || s.summary.miou.has_value();

    pooled.objects += s.sums.objects;
    pooled.score_sum += s.sums.score_sum;
    pooled.score_points += s.sums.score_points;
    pooled.synonym_inlier_sum += s.sums.synonym_inlier_sum;
    pooled.synonym_right_sum += s.sums.synonym_right_sum;
    pooled.synonym_points += s.sums.synonym_points;
    pooled.dvs_inlier_sum += s.sums.dvs_inlier_sum;
    pooled.dvs_left_sum += s.sums.dvs_left_sum;
    pooled.dvs_right_sum += s.sums.dvs_right_sum;
    pooled.dvs_points += s.sums.dvs_points;
    for (const auto& [cls, c] : s.sums.classes) {
      ClassCounts& p = pooled.classes[cls];
      p.tp += c.tp;
      p.fp += c.fp;
      p.fn += c.fn;
    }
    points += s.summary.points;
    matched += s.summary.matched_points;
  }

  if (!scenes.empty()) {
    SegmentationSummary& m = report.mean;
    m.objects = pooled.objects;
    m.points = points;
    m.matched_points = matched;
    for (std::size_t k = 0; k < nn; ++k) {
      Frequencies f{};
      for (std::size_t c = 0; c < kCategoryCount; ++c) {
        f[c] = freq_sum[k][c] / static_cast<double>(scenes.size());
      }
      m.frequencies.push_back(f);
    }
    m.ranking = {mr.get(), rs.get(), rdvs.get(), ps.get(), pdo.get(), pdu.get()};
    m.miou = miou.get();
    report.pooled = summarize(pooled, points, matched, any_miou);
  }
  return report;
}

}  // namespace lexeval
