#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <tuple>

namespace lexeval::oracle {
namespace {

using Key = std::tuple<long long, long long, long long>;

Key key_of(const Point3& p, double res) {
  return {static_cast<long long>(std::floor(p[0] / res)), static_cast<long long>(std::floor(p[1] / res)),
          static_cast<long long>(std::floor(p[2] / res))};
}

// Member nearest the voxel centroid, lowest index on ties; ascending.
std::vector<std::size_t> downsample(const std::vector<Point3>& pts, double res) {
  std::map<Key, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < pts.size(); ++i) cells[key_of(pts[i], res)].push_back(i);
  std::vector<std::size_t> keep;
  for (const auto& [_, members] : cells) {
    double c[3] = {0, 0, 0};
    for (std::size_t i : members) {
      for (int a = 0; a < 3; ++a) c[a] += pts[i][a];
    }
    for (double& v : c) v /= static_cast<double>(members.size());
    std::size_t best = members.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i : members) {
      double d = 0;
      for (int a = 0; a < 3; ++a) d += (pts[i][a] - c[a]) * (pts[i][a] - c[a]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    keep.push_back(best);
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

double dist2(const Point3& a, const Point3& b) {
  double d = 0;
  for (int i = 0; i < 3; ++i) {
    const double t = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    d += t * t;
  }
  return d;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0 || bb == 0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

// Full ranking of all rows of `labels` against `feature`.
std::vector<std::size_t> rank_all(std::span<const float> feature, const Matrix& labels) {
  std::vector<std::pair<double, std::size_t>> s;
  for (std::size_t l = 0; l < labels.rows(); ++l) s.emplace_back(-cosine(feature, labels.row(l)), l);
  std::sort(s.begin(), s.end());
  std::vector<std::size_t> order;
  for (const auto& [_, l] : s) order.push_back(l);
  return order;
}

std::optional<double> avg(double sum, std::size_t n) {
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> flip(std::optional<double> v) {
  if (v) return 1.0 - *v;
  return v;
}

struct Tally {
  std::vector<std::array<double, kCategoryCount>> fractions;
  std::size_t objects = 0, points = 0, matched = 0;
  double score = 0;
  std::size_t score_n = 0;
  double s_in = 0, s_right = 0;
  std::size_t s_n = 0;
  double d_in = 0, d_left = 0, d_right = 0;
  std::size_t d_n = 0;
  std::map<std::size_t, std::array<std::size_t, 3>> classes;  // tp, fp, fn

  void add(const Tally& o) {
    if (fractions.empty()) fractions.assign(o.fractions.size(), {});
    for (std::size_t k = 0; k < o.fractions.size(); ++k) {
      for (std::size_t c = 0; c < kCategoryCount; ++c) fractions[k][c] += o.fractions[k][c];
    }
    objects += o.objects;
    points += o.points;
    matched += o.matched;
    score += o.score;
    score_n += o.score_n;
    s_in += o.s_in;
    s_right += o.s_right;
    s_n += o.s_n;
    d_in += o.d_in;
    d_left += o.d_left;
    d_right += o.d_right;
    d_n += o.d_n;
    for (const auto& [cls, v] : o.classes) {
      for (int i = 0; i < 3; ++i) classes[cls][i] += v[i];
    }
  }

  SegmentationSummary summary() const {
    SegmentationSummary s;
    s.objects = objects;
    s.points = points;
    s.matched_points = matched;
    for (const auto& f : fractions) {
      Frequencies out{};
      for (std::size_t c = 0; c < kCategoryCount; ++c) out[c] = f[c] / static_cast<double>(objects);
      s.frequencies.push_back(out);
    }
    s.ranking.mean_score = avg(score, score_n);
    s.ranking.synonym_inlier_rate = avg(s_in, s_n);
    s.ranking.synonym_under_penalty = flip(avg(s_right, s_n));
    s.ranking.dvs_inlier_rate = avg(d_in, d_n);
    s.ranking.dvs_over_penalty = flip(avg(d_left, d_n));
    s.ranking.dvs_under_penalty = flip(avg(d_right, d_n));
    double iou = 0;
    std::size_t present = 0;
    for (const auto& [_, v] : classes) {
      if (v[0] + v[2] == 0) continue;
      iou += static_cast<double>(v[0]) / static_cast<double>(v[0] + v[1] + v[2]);
      ++present;
    }
    s.miou = avg(iou, present);
    return s;
  }
};

// Rank score pieces for a label at 1-based rank r with ideal box [bl, br]
// in a list of n labels.
double left_piece(double r, double bl) { return 1.0 + std::min(0.0, (r - bl) / bl); }
double right_piece(double r, double br, double n) {
  if (br >= n) return 1.0;
  return 1.0 - std::max(0.0, (r - br) / (n - br));
}

std::vector<std::size_t> indices(const std::set<std::string>& labels, const PromptList& prompts) {
  std::vector<std::size_t> out;
  for (const std::string& l : labels) {
    const auto it = std::find(prompts.labels().begin(), prompts.labels().end(), l);
    if (it == prompts.labels().end()) throw DomainError("label '" + l + "' not in the prompt list");
    out.push_back(static_cast<std::size_t>(it - prompts.labels().begin()));
  }
  return out;
}

bool has(const std::vector<std::size_t>& v, std::size_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

Tally scene_tally(const GroundTruthScene& scene, const Prediction& prediction,
                  const Matrix& embeddings, const PromptList& prompts, const OracleOptions& opt) {
  if (scene.points.size() > kMaxPoints) throw DomainError("oracle input exceeds its point limit");
  const std::size_t L = prompts.size();

  const std::vector<std::size_t> gt_keep = downsample(scene.points, opt.voxel_size);
  std::vector<Point3> featured;
  std::vector<std::uint32_t> rows;
  for (std::size_t i = 0; i < prediction.points.size(); ++i) {
    if (prediction.feature_row[i] == Prediction::kNoFeature) continue;
    featured.push_back(prediction.points[i]);
    rows.push_back(prediction.feature_row[i]);
  }
  const std::vector<std::size_t> pred_keep = downsample(featured, opt.voxel_size);

  const auto evaluated = [&](InstanceId id) {
    const auto it = scene.labels.find(id);
    if (it == scene.labels.end() || scene.excluded.contains(id)) return false;
    return !(opt.exclude_ambiguous && it->second.ambiguous);
  };
  std::map<InstanceId, std::vector<std::size_t>> objects;  // id -> gt point indices
  for (std::size_t i : gt_keep) {
    if (evaluated(scene.instance_ids[i])) objects[scene.instance_ids[i]].push_back(i);
  }
  if (objects.empty()) throw DomainError("no evaluable objects");

  Tally t;
  t.fractions.assign(opt.top_n.size(), {});
  t.objects = objects.size();
  const double max2 = opt.match_distance * opt.match_distance;
  for (const auto& [id, pts] : objects) {
    const CategoryLabelSet& own = scene.labels.at(id);
    const auto S = indices(own.synonyms, prompts);
    const auto Dp = indices(own.depictions, prompts);
    const auto V = indices(own.visually_similar, prompts);
    std::vector<std::size_t> C;
    for (InstanceId nb : own.clutter_ids) {
      const auto it = scene.labels.find(nb);
      if (it == scene.labels.end()) continue;
      for (const auto* set : {&it->second.synonyms, &it->second.depictions, &it->second.visually_similar}) {
        for (std::size_t l : indices(*set, prompts)) C.push_back(l);
      }
    }
    std::vector<std::size_t> DVS = Dp;
    DVS.insert(DVS.end(), V.begin(), V.end());
    std::optional<std::size_t> primary;
    if (!own.synonyms.empty()) primary = prompts.index_of(*own.synonyms.begin());

    std::vector<std::array<std::size_t, kCategoryCount>> counts(opt.top_n.size());
    for (std::size_t g : pts) {
      ++t.points;
      std::optional<std::size_t> match;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t p : pred_keep) {
        const double d = dist2(scene.points[g], featured[p]);
        if (d <= max2 && d < best) {
          best = d;
          match = p;
        }
      }
      if (!match) {
        for (auto& c : counts) ++c[static_cast<std::size_t>(Category::kMissing)];
        if (primary) ++t.classes[*primary][2];
        continue;
      }
      ++t.matched;
      const auto order = rank_all(prediction.features.row(rows[*match]), embeddings);
      std::vector<std::size_t> rank(L);
      for (std::size_t r = 0; r < L; ++r) rank[order[r]] = r + 1;

      for (std::size_t k = 0; k < opt.top_n.size(); ++k) {
        const std::vector<std::size_t> top(order.begin(), order.begin() + opt.top_n[k]);
        const auto hit = [&](const std::vector<std::size_t>& set) {
          for (std::size_t l : top) {
            if (has(set, l)) return true;
          }
          return false;
        };
        Category c = Category::kIncorrect;
        if (hit(S)) c = Category::kSynonym;
        else if (hit(Dp)) c = Category::kDepiction;
        else if (hit(V)) c = Category::kVisuallySimilar;
        else if (hit(C)) c = Category::kClutter;
        ++counts[k][static_cast<std::size_t>(c)];
      }

      const double n = static_cast<double>(L);
      const double s_left = 1;
      const double s_right = static_cast<double>(std::max<std::size_t>(S.size(), 1));
      const double d_left = static_cast<double>(S.size() + 1);
      const double d_right = static_cast<double>(S.size() + std::max<std::size_t>(DVS.size(), 1));
      double score = 0, sin = 0, sright = 0, din = 0, dleft = 0, dright = 0;
      for (std::size_t l : S) {
        const double r = static_cast<double>(rank[l]);
        const double lp = left_piece(r, s_left), rp = right_piece(r, s_right, n);
        score += std::min(lp, rp);
        sright += rp;
        if (r >= s_left && r <= s_right) sin += 1;
      }
      for (std::size_t l : DVS) {
        const double r = static_cast<double>(rank[l]);
        const double lp = left_piece(r, d_left), rp = right_piece(r, d_right, n);
        score += std::min(lp, rp);
        dleft += lp;
        dright += rp;
        if (r >= d_left && r <= d_right) din += 1;
      }
      if (!S.empty() || !DVS.empty()) {
        t.score += score / static_cast<double>(S.size() + DVS.size());
        ++t.score_n;
      }
      if (!S.empty()) {
        t.s_in += sin / static_cast<double>(S.size());
        t.s_right += sright / static_cast<double>(S.size());
        ++t.s_n;
      }
      if (!DVS.empty()) {
        t.d_in += din / static_cast<double>(DVS.size());
        t.d_left += dleft / static_cast<double>(DVS.size());
        t.d_right += dright / static_cast<double>(DVS.size());
        ++t.d_n;
      }
      if (primary && order[0] == *primary) {
        ++t.classes[*primary][0];
      } else {
        if (primary) ++t.classes[*primary][2];
        ++t.classes[order[0]][1];
      }
    }
    for (std::size_t k = 0; k < opt.top_n.size(); ++k) {
      for (std::size_t c = 0; c < kCategoryCount; ++c) {
        t.fractions[k][c] += static_cast<double>(counts[k][c]) / static_cast<double>(pts.size());
      }
    }
  }
  return t;
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& v) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& x : v) {
    if (x) {
      s += *x;
      ++n;
    }
  }
  return avg(s, n);
}

std::vector<double> thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  t.push_back(0.50);
  t.push_back(0.25);
  return t;
}

std::set<Key> voxels(const std::vector<Point3>& cloud, const std::vector<std::uint32_t>& idx, double res) {
  std::set<Key> out;
  for (std::uint32_t i : idx) out.insert(key_of(cloud[i], res));
  return out;
}

double iou(const std::set<Key>& a, const std::set<Key>& b) {
  std::size_t inter = 0;
  for (const Key& k : a) inter += b.count(k);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// All-points interpolation: each recall step weighted by the best precision
// at or beyond it.
double ap_of(const std::vector<bool>& hits, std::size_t positives) {
  if (positives == 0) return 0.0;
  double ap = 0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (!hits[i]) continue;
    ++tp;
    double best = 0;
    std::size_t tp_j = tp;
    for (std::size_t j = i; j < hits.size(); ++j) {
      if (j > i && hits[j]) ++tp_j;
      best = std::max(best, static_cast<double>(tp_j) / static_cast<double>(j + 1));
    }
    ap += best / static_cast<double>(positives);
  }
  return ap;
}

}  // namespace

SegmentationReport segmentation_report(std::span<const SegmentationInput> scenes,
                                       const Matrix& label_embeddings, const PromptList& prompts,
                                       const OracleOptions& options) {
  if (prompts.size() > kMaxLabels) throw DomainError("oracle input exceeds its label limit");
  SegmentationReport report;
  report.top_n = options.top_n;
  std::vector<std::pair<std::string, Tally>> tallies;
  for (const SegmentationInput& in : scenes) {
    tallies.emplace_back(in.scene->name,
                         scene_tally(*in.scene, *in.prediction, label_embeddings, prompts, options));
  }
  std::sort(tallies.begin(), tallies.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Tally pooled;
  std::vector<SegmentationSummary> sums;
  for (const auto& [name, t] : tallies) {
    sums.push_back(t.summary());
    report.scenes.emplace_back(name, sums.back());
    pooled.add(t);
  }
  report.pooled = pooled.summary();
  SegmentationSummary& m = report.mean;
  m.objects = pooled.objects;
  m.points = pooled.points;
  m.matched_points = pooled.matched;
  const auto over = [&](auto get) {
    std::vector<std::optional<double>> v;
    for (const auto& s : sums) v.push_back(get(s));
    return mean_defined(v);
  };
  for (std::size_t k = 0; k < options.top_n.size(); ++k) {
    Frequencies f{};
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      f[c] = *over([&](const SegmentationSummary& s) { return std::optional(s.frequencies[k][c]); });
    }
    m.frequencies.push_back(f);
  }
  m.ranking.mean_score = over([](const auto& s) { return s.ranking.mean_score; });
  m.ranking.synonym_inlier_rate = over([](const auto& s) { return s.ranking.synonym_inlier_rate; });
  m.ranking.dvs_inlier_rate = over([](const auto& s) { return s.ranking.dvs_inlier_rate; });
  m.ranking.synonym_under_penalty = over([](const auto& s) { return s.ranking.synonym_under_penalty; });
  m.ranking.dvs_over_penalty = over([](const auto& s) { return s.ranking.dvs_over_penalty; });
  m.ranking.dvs_under_penalty = over([](const auto& s) { return s.ranking.dvs_under_penalty; });
  m.miou = over([](const auto& s) { return s.miou; });
  return report;
}

RetrievalReport retrieval_report(std::span<const RetrievalInput> scenes, double resolution) {
  const std::vector<double> ts = thresholds();
  RetrievalReport report;
  std::vector<std::pair<std::string, RetrievalSummary>> rows;
  for (const RetrievalInput& in : scenes) {
    const GroundTruthScene& scene = *in.scene;
    const Prediction& pred = *in.prediction;
    if (scene.points.size() > kMaxPoints) throw DomainError("oracle input exceeds its point limit");
    std::vector<std::set<Key>> inst_vox;
    for (const PredictedInstance& inst : pred.instances) {
      inst_vox.push_back(voxels(pred.points, inst.points, resolution));
    }
    // Per kind: sums of mAP, AP50, AP25 and query count.
    std::array<std::array<double, 4>, 2> kind{};
    RetrievalSummary s;
    for (std::size_t q = 0; q < in.queries->size(); ++q) {
      const RetrievalQuery& query = (*in.queries)[q];
      std::vector<std::set<Key>> targets;
      for (InstanceId id : query.targets) {
        std::set<Key> v;
        for (std::size_t i = 0; i < scene.points.size(); ++i) {
          if (scene.instance_ids[i] == id) v.insert(key_of(scene.points[i], resolution));
        }
        targets.push_back(std::move(v));
      }
      std::vector<std::pair<double, std::size_t>> order;
      for (std::size_t i = 0; i < pred.instances.size(); ++i) {
        order.emplace_back(-cosine(in.query_embeddings->row(q), pred.instances[i].feature), i);
      }
      std::sort(order.begin(), order.end());
      std::vector<double> ap;
      for (double t : ts) {
        std::vector<bool> used(targets.size(), false), hits;
        for (const auto& [_, i] : order) {
          std::optional<std::size_t> pick;
          double best = -1;
          for (std::size_t g = 0; g < targets.size(); ++g) {
            const double v = iou(inst_vox[i], targets[g]);
            if (!used[g] && v >= t && v > best) {
              best = v;
              pick = g;
            }
          }
          if (pick) used[*pick] = true;
          hits.push_back(pick.has_value());
        }
        ap.push_back(ap_of(hits, targets.size()));
      }
      std::size_t bucket = kNoMatchBucket;
      for (std::size_t r = 0; r < order.size(); ++r) {
        bool any = false;
        for (const auto& g : targets) any = any || iou(inst_vox[order[r].second], g) >= 0.25;
        if (any) {
          bucket = std::min<std::size_t>(r, 9);
          break;
        }
      }
      ++s.histogram[bucket];
      const double map = std::accumulate(ap.begin(), ap.begin() + 10, 0.0) / 10.0;
      auto& k = kind[static_cast<std::size_t>(query.kind)];
      k[0] += map;
      k[1] += ap[10];
      k[2] += ap[11];
      k[3] += 1;
    }
    const auto make = [](double map, double ap50, double ap25, double n) {
      ApSummary a;
      a.queries = static_cast<std::size_t>(n);
      if (n > 0) {
        a.map = map / n;
        a.ap50 = ap50 / n;
        a.ap25 = ap25 / n;
      }
      return a;
    };
    s.synonym = make(kind[0][0], kind[0][1], kind[0][2], kind[0][3]);
    s.depiction_synonym = make(kind[1][0], kind[1][1], kind[1][2], kind[1][3]);
    s.overall = make(kind[0][0] + kind[1][0], kind[0][1] + kind[1][1], kind[0][2] + kind[1][2],
                     kind[0][3] + kind[1][3]);
    rows.emplace_back(scene.name, s);
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  report.scenes = rows;
  const auto over = [&](ApSummary RetrievalSummary::*f) {
    ApSummary a;
    std::vector<std::optional<double>> map, ap50, ap25;
    for (const auto& [_, s] : rows) {
      a.queries += (s.*f).queries;
      map.push_back((s.*f).map);
      ap50.push_back((s.*f).ap50);
      ap25.push_back((s.*f).ap25);
    }
    a.map = mean_defined(map);
    a.ap50 = mean_defined(ap50);
    a.ap25 = mean_defined(ap25);
    return a;
  };
  report.mean.overall = over(&RetrievalSummary::overall);
  report.mean.synonym = over(&RetrievalSummary::synonym);
  report.mean.depiction_synonym = over(&RetrievalSummary::depiction_synonym);
  for (const auto& [_, s] : rows) {
    for (std::size_t b = 0; b < kRankBuckets; ++b) report.mean.histogram[b] += s.histogram[b];
  }
  return report;
}

}  // namespace lexeval::oracle
