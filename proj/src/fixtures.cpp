#include "lexeval/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "lexeval/io.hpp"

namespace lexeval {
namespace {

using Rng = std::mt19937_64;
using Basis = std::vector<std::vector<double>>;

constexpr double kSpacing = 0.2;
constexpr double kNeighbourOffset = 0.1;
constexpr double kCellCentre = 0.025;
constexpr double kJitter = 0.005;
constexpr double kGroupStride = 50.0;
constexpr std::size_t kTopWindow = 10;

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double unit(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  std::shuffle(v.begin(), v.end(), rng);
}

// Rows of a random orthogonal matrix: Gram-Schmidt (two passes) on
// Gaussian rows.
Basis orthonormal_rows(std::size_t n, std::size_t dim, Rng& rng) {
  std::normal_distribution<double> gauss;
  Basis rows;
  while (rows.size() < n) {
    std::vector<double> v(dim);
    for (double& x : v) x = gauss(rng);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& r : rows) {
        const double d = std::inner_product(v.begin(), v.end(), r.begin(), 0.0);
        for (std::size_t i = 0; i < dim; ++i) v[i] -= d * r[i];
      }
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    rows.push_back(std::move(v));
  }
  return rows;
}

// Outcome counts for n points: floors, then leftovers by largest remainder
// (lower category first on ties).
std::array<std::size_t, kCategoryCount> quotas(const FailureMix& mix, std::size_t n) {
  std::array<std::size_t, kCategoryCount> count{};
  std::array<double, kCategoryCount> rest{};
  std::size_t used = 0;
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    const double exact = mix[c] * static_cast<double>(n);
    count[c] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rest[c] = exact - static_cast<double>(count[c]);
    used += count[c];
  }
  std::array<std::size_t, kCategoryCount> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rest[a] > rest[b]; });
  for (std::size_t i = 0; used < n; ++i, ++used) ++count[order[i % kCategoryCount]];
  return count;
}

double left_term(std::size_t r, std::size_t left) {
  if (r >= left) return 1.0;
  return 1.0 - static_cast<double>(left - r) / static_cast<double>(left);
}

double right_term(std::size_t r, std::size_t right, std::size_t list) {
  if (r <= right || right >= list) return 1.0;
  return 1.0 - static_cast<double>(r - right) / static_cast<double>(list - right);
}

struct ObjectLayout {
  InstanceId id = 0;
  std::vector<std::uint32_t> synonyms;
  std::vector<std::uint32_t> depictions;
  std::vector<std::uint32_t> visually_similar;
  std::vector<std::size_t> points;  // scene point indices
  std::vector<std::size_t> neighbours;  // object slots
  std::uint32_t primary = 0;
};

struct SceneLayout {
  std::vector<ObjectLayout> objects;
  std::vector<std::size_t> wall_points;
};

struct Sums {
  std::vector<Frequencies> fractions;
  std::size_t objects = 0;
  std::size_t points = 0;
  std::size_t matched = 0;
  double score = 0.0;
  std::size_t score_points = 0;
  double syn_inlier = 0.0;
  double syn_right = 0.0;
  std::size_t syn_points = 0;
  double dvs_inlier = 0.0;
  double dvs_left = 0.0;
  double dvs_right = 0.0;
  std::size_t dvs_points = 0;
  std::map<std::uint32_t, ClassCounts> classes;
};

std::optional<double> mean_of(double sum, std::size_t n) {
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> one_minus(std::optional<double> v) {
  if (!v) return std::nullopt;
  return 1.0 - *v;
}

SegmentationSummary summarize(const Sums& s) {
  SegmentationSummary out;
  out.objects = s.objects;
  out.points = s.points;
  out.matched_points = s.matched;
  for (const Frequencies& f : s.fractions) {
    Frequencies v{};
    for (std::size_t c = 0; c < kCategoryCount; ++c) v[c] = f[c] / static_cast<double>(s.objects);
    out.frequencies.push_back(v);
  }
  out.ranking.mean_score = mean_of(s.score, s.score_points);
  out.ranking.synonym_inlier_rate = mean_of(s.syn_inlier, s.syn_points);
  out.ranking.synonym_under_penalty = one_minus(mean_of(s.syn_right, s.syn_points));
  out.ranking.dvs_inlier_rate = mean_of(s.dvs_inlier, s.dvs_points);
  out.ranking.dvs_over_penalty = one_minus(mean_of(s.dvs_left, s.dvs_points));
  out.ranking.dvs_under_penalty = one_minus(mean_of(s.dvs_right, s.dvs_points));
  double iou = 0.0;
  std::size_t present = 0;
  for (const auto& [_, c] : s.classes) {
    if (c.tp + c.fn == 0) continue;
    iou += static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn);
    ++present;
  }
  out.miou = mean_of(iou, present);
  return out;
}

void check_config(const FixtureConfig& c) {
  if (c.scenes == 0 || c.objects == 0 || c.points_per_object == 0 || c.synonyms == 0) {
    throw DomainError("fixture scenes, objects, points per object and synonyms must be positive");
  }
  if (c.objects >= static_cast<std::size_t>(kFixtureWallId)) throw DomainError("too many fixture objects");
  if (c.distractors < kTopWindow) throw DomainError("fixtures need at least 10 distractor labels");
  const double total = std::accumulate(c.mix.begin(), c.mix.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw DomainError("failure mix must sum to 1");
  for (double f : c.mix) {
    if (f < 0.0) throw DomainError("failure mix fractions must be non-negative");
  }
  const auto wants = [&](Category cat) { return c.mix[static_cast<std::size_t>(cat)] > 0.0; };
  if (wants(Category::kDepiction) && c.depictions == 0) {
    throw DomainError("depiction confusion requested but objects have no depictions");
  }
  if (wants(Category::kVisuallySimilar) && c.visually_similar == 0) {
    throw DomainError("visually similar confusion requested but objects have none");
  }
  if (wants(Category::kClutter) && c.objects < 2) {
    throw DomainError("clutter bleed requested but no object has a neighbour");
  }
  if (c.top_n.empty()) throw DomainError("no top-n values");
  for (std::size_t n : c.top_n) {
    if (n < 1 || n > kTopWindow) throw DomainError("fixture expectations cover top-n in [1, 10]");
  }
  if (c.coverages.empty()) throw DomainError("no retrieval coverages");
  for (double v : c.coverages) {
    if (!(v > 0.0 && v <= 1.0)) throw DomainError("coverages must lie in (0, 1]");
  }
}

std::string label_name(std::size_t scene, std::size_t object, const char* kind, std::size_t j) {
  return "s" + std::to_string(scene) + " o" + std::to_string(object) + " " + kind + std::to_string(j);
}

std::string scene_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%02zu", k);
  return buf;
}

// Group slot of each object: pairs (2m, 2m + 1); with an odd count above
// one the last object joins the final pair.
std::size_t group_of(std::size_t o, std::size_t count) {
  if (count % 2 == 1 && count >= 3 && o == count - 1) return (count - 3) / 2;
  return o / 2;
}

std::array<double, 3> offset_of(std::size_t o, std::size_t count) {
  if (count % 2 == 1 && count >= 3 && o == count - 1) return {0.0, kNeighbourOffset, 0.0};
  return o % 2 == 0 ? std::array<double, 3>{0.0, 0.0, 0.0}
                    : std::array<double, 3>{kNeighbourOffset, 0.0, 0.0};
}

Point3 lattice_point(std::array<double, 3> origin, std::size_t i, std::size_t side) {
  const std::size_t x = i % side;
  const std::size_t y = (i / side) % side;
  const std::size_t z = i / (side * side);
  return {static_cast<float>(origin[0] + kSpacing * static_cast<double>(x) + kCellCentre),
          static_cast<float>(origin[1] + kSpacing * static_cast<double>(y) + kCellCentre),
          static_cast<float>(origin[2] + kSpacing * static_cast<double>(z) + kCellCentre)};
}

Point3 jittered(const Point3& p, Rng& rng) {
  std::uniform_real_distribution<double> j(-kJitter, kJitter);
  return {static_cast<float>(p[0] + j(rng)), static_cast<float>(p[1] + j(rng)),
          static_cast<float>(p[2] + j(rng))};
}

std::vector<float> planted_feature(const std::vector<std::uint32_t>& ranking, const Basis& basis,
                                   std::size_t dim) {
  std::vector<double> f(dim, 0.0);
  const std::size_t n = ranking.size();
  for (std::size_t r = 0; r < n; ++r) {
    const double w = static_cast<double>(n - r);
    const auto& e = basis[ranking[r]];
    for (std::size_t d = 0; d < dim; ++d) f[d] += w * e[d];
  }
  return {f.begin(), f.end()};
}

struct PlantedPoint {
  Category mode = Category::kSynonym;
  std::size_t recovery = 0;  // rank of an early synonym, 0 if none
  std::vector<std::uint32_t> ranking;
};

void append_unplaced(std::vector<std::uint32_t>& ranking, std::vector<std::uint8_t>& placed,
                     std::vector<std::uint32_t> labels, Rng& rng) {
  shuffle(labels, rng);
  for (std::uint32_t l : labels) {
    if (!placed[l]) {
      placed[l] = 1;
      ranking.push_back(l);
    }
  }
}

PlantedPoint plant_point(Category mode, const ObjectLayout& obj, const SceneLayout& layout,
                         const std::vector<std::uint32_t>& distractors, std::size_t list_size,
                         double recovery_probability, Rng& rng) {
  PlantedPoint p;
  p.mode = mode;
  if (mode == Category::kMissing) return p;
  std::vector<std::uint8_t> placed(list_size, 0);
  std::vector<std::uint32_t> dvs = obj.depictions;
  dvs.insert(dvs.end(), obj.visually_similar.begin(), obj.visually_similar.end());
  std::vector<std::uint32_t> everything(list_size);
  std::iota(everything.begin(), everything.end(), 0u);

  if (mode != Category::kSynonym) {
    std::uint32_t lead = 0;
    const auto pick = [&](const std::vector<std::uint32_t>& from) {
      return from[uniform(rng, 0, from.size() - 1)];
    };
    switch (mode) {
      case Category::kDepiction: lead = pick(obj.depictions); break;
      case Category::kVisuallySimilar: lead = pick(obj.visually_similar); break;
      case Category::kClutter: {
        std::vector<std::uint32_t> pool;
        for (std::size_t n : obj.neighbours) {
          const ObjectLayout& nb = layout.objects[n];
          for (const auto* set : {&nb.synonyms, &nb.depictions, &nb.visually_similar}) {
            pool.insert(pool.end(), set->begin(), set->end());
          }
        }
        std::sort(pool.begin(), pool.end());
        lead = pick(pool);
        break;
      }
      default: lead = pick(distractors); break;
    }
    std::vector<std::uint32_t> fillers;
    std::vector<std::uint32_t> shuffled = distractors;
    shuffle(shuffled, rng);
    for (std::uint32_t d : shuffled) {
      if (d != lead && fillers.size() < kTopWindow - 1) fillers.push_back(d);
    }
    std::vector<std::uint32_t> window{lead};
    window.insert(window.end(), fillers.begin(), fillers.end());
    if (unit(rng) < recovery_probability) {
      p.recovery = uniform(rng, 2, kTopWindow);
      window.pop_back();
      window.insert(window.begin() + static_cast<std::ptrdiff_t>(p.recovery - 1),
                    obj.synonyms[uniform(rng, 0, obj.synonyms.size() - 1)]);
    }
    for (std::uint32_t l : window) {
      placed[l] = 1;
      p.ranking.push_back(l);
    }
  }
  append_unplaced(p.ranking, placed, obj.synonyms, rng);
  append_unplaced(p.ranking, placed, dvs, rng);
  append_unplaced(p.ranking, placed, everything, rng);
  return p;
}

Category planted_category(const PlantedPoint& p, std::size_t n) {
  if (p.mode == Category::kMissing || p.mode == Category::kSynonym) return p.mode;
  if (p.recovery != 0 && n >= p.recovery) return Category::kSynonym;
  return p.mode;
}

void score_planted(const PlantedPoint& p, const ObjectLayout& obj, std::size_t list_size,
                   Sums& sums) {
  std::vector<std::size_t> rank(list_size);
  for (std::size_t r = 0; r < p.ranking.size(); ++r) rank[p.ranking[r]] = r + 1;
  const std::size_t ns = obj.synonyms.size();
  const std::size_t nd = obj.depictions.size() + obj.visually_similar.size();
  double score = 0.0;
  std::size_t syn_in = 0;
  double syn_right = 0.0;
  for (std::uint32_t l : obj.synonyms) {
    const double rt = right_term(rank[l], ns, list_size);
    score += rt;  // the left term of the synonym box is always 1
    syn_right += rt;
    if (rank[l] <= ns) ++syn_in;
  }
  std::size_t dvs_in = 0;
  double dvs_left = 0.0;
  double dvs_right = 0.0;
  for (const auto* set : {&obj.depictions, &obj.visually_similar}) {
    for (std::uint32_t l : *set) {
      const double lt = left_term(rank[l], ns + 1);
      const double rt = right_term(rank[l], ns + nd, list_size);
      score += std::min(lt, rt);
      dvs_left += lt;
      dvs_right += rt;
      if (rank[l] > ns && rank[l] <= ns + nd) ++dvs_in;
    }
  }
  sums.score += score / static_cast<double>(ns + nd);
  ++sums.score_points;
  sums.syn_inlier += static_cast<double>(syn_in) / static_cast<double>(ns);
  sums.syn_right += syn_right / static_cast<double>(ns);
  ++sums.syn_points;
  if (nd > 0) {
    sums.dvs_inlier += static_cast<double>(dvs_in) / static_cast<double>(nd);
    sums.dvs_left += dvs_left / static_cast<double>(nd);
    sums.dvs_right += dvs_right / static_cast<double>(nd);
    ++sums.dvs_points;
  }
}

struct PlantedRetrieval {
  std::vector<double> ap;  // map thresholds, then 0.50, 0.25
  std::size_t bucket = kNoMatchBucket;
  QueryKind kind = QueryKind::kSynonym;
};

std::vector<double> planted_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  t.push_back(0.50);
  t.push_back(0.25);
  return t;
}

RetrievalSummary summarize_retrieval(const std::vector<PlantedRetrieval>& queries) {
  struct Acc {
    double map = 0, ap50 = 0, ap25 = 0;
    std::size_t n = 0;
    ApSummary get() const {
      ApSummary a;
      a.queries = n;
      if (n > 0) {
        a.map = map / static_cast<double>(n);
        a.ap50 = ap50 / static_cast<double>(n);
        a.ap25 = ap25 / static_cast<double>(n);
      }
      return a;
    }
  } all, syn, dep;
  RetrievalSummary s;
  for (const PlantedRetrieval& q : queries) {
    double map = 0.0;
    for (std::size_t t = 0; t < 10; ++t) map += q.ap[t];
    map /= 10.0;
    for (Acc* a : {&all, q.kind == QueryKind::kSynonym ? &syn : &dep}) {
      a->map += map;
      a->ap50 += q.ap[10];
      a->ap25 += q.ap[11];
      ++a->n;
    }
    ++s.histogram[q.bucket];
  }
  s.overall = all.get();
  s.synonym = syn.get();
  s.depiction_synonym = dep.get();
  return s;
}

}  // namespace

Fixture generate_fixture(const FixtureConfig& config) {
  check_config(config);
  Rng rng(config.seed);
  Fixture fx;
  fx.config = config;
  const std::size_t K = config.objects;

  // Labels and geometry.
  std::vector<std::string> labels;
  std::vector<SceneLayout> layouts(config.scenes);
  for (std::size_t k = 0; k < config.scenes; ++k) {
    FixtureScene fs;
    GroundTruthScene& scene = fs.scene;
    scene.name = scene_name(k);
    SceneLayout& layout = layouts[k];
    for (std::size_t o = 0; o < K; ++o) {
      ObjectLayout obj;
      obj.id = static_cast<InstanceId>(o + 1);
      CategoryLabelSet set;
      const auto add = [&](const char* kind, std::size_t count, std::set<std::string>& names,
                           std::vector<std::uint32_t>& idx) {
        for (std::size_t j = 0; j < count; ++j) {
          const std::string name = label_name(k, o, kind, j);
          names.insert(name);
          idx.push_back(static_cast<std::uint32_t>(labels.size()));
          labels.push_back(name);
        }
      };
      add("syn", config.synonyms, set.synonyms, obj.synonyms);
      add("dep", config.depictions, set.depictions, obj.depictions);
      add("vis", config.visually_similar, set.visually_similar, obj.visually_similar);
      obj.primary = obj.synonyms.front();  // "syn0" sorts first
      set.ambiguous = unit(rng) < config.ambiguous_probability;

      const std::size_t n = config.vary_sizes
                                ? uniform(rng, (config.points_per_object + 1) / 2, config.points_per_object)
                                : config.points_per_object;
      const auto side = static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(n)) - 1e-9));
      const std::array<double, 3> off = offset_of(o, K);
      const double gy = kGroupStride * static_cast<double>(group_of(o, K));
      for (std::size_t i = 0; i < n; ++i) {
        obj.points.push_back(scene.points.size());
        scene.points.push_back(lattice_point({off[0], gy + off[1], off[2]}, i, std::max<std::size_t>(side, 1)));
        scene.instance_ids.push_back(obj.id);
      }
      scene.labels.emplace(obj.id, std::move(set));
      layout.objects.push_back(std::move(obj));
    }
    for (std::size_t o = 0; o < K; ++o) {
      for (std::size_t p = 0; p < K; ++p) {
        if (p != o && group_of(p, K) == group_of(o, K)) {
          layout.objects[o].neighbours.push_back(p);
          scene.labels.at(layout.objects[o].id).clutter_ids.insert(layout.objects[p].id);
        }
      }
    }
    for (std::size_t i = 0; i < 25; ++i) {
      layout.wall_points.push_back(scene.points.size());
      scene.points.push_back(lattice_point({-kGroupStride, 0.0, 0.0}, i, 5));
      scene.instance_ids.push_back(kFixtureWallId);
    }
    scene.excluded.insert(kFixtureWallId);
    fx.scenes.push_back(std::move(fs));
  }
  std::vector<std::uint32_t> distractors;
  for (std::size_t j = 0; j < config.distractors; ++j) {
    distractors.push_back(static_cast<std::uint32_t>(labels.size()));
    labels.push_back("distractor " + std::to_string(j));
  }
  const std::size_t L = labels.size();
  fx.prompts = PromptList(labels);

  // Retrieval queries, straight from the label layout.
  std::vector<std::vector<std::pair<RetrievalQuery, std::size_t>>> scene_queries(config.scenes);
  std::size_t needed = L;
  for (std::size_t k = 0; k < config.scenes; ++k) {
    auto& qs = scene_queries[k];
    for (std::size_t o = 0; o < K; ++o) {
      const ObjectLayout& obj = layouts[k].objects[o];
      for (std::uint32_t s : obj.synonyms) {
        qs.push_back({{labels[s], QueryKind::kSynonym, {obj.id}}, o});
        for (std::uint32_t d : obj.depictions) {
          qs.push_back({{labels[d] + " " + labels[s], QueryKind::kDepictionSynonym, {obj.id}}, o});
        }
      }
    }
    std::sort(qs.begin(), qs.end(), [](const auto& a, const auto& b) {
      return std::pair(a.first.kind, a.first.text) < std::pair(b.first.kind, b.first.text);
    });
    needed = std::max(needed, qs.size() + K);
  }
  const std::size_t D = config.dim == 0 ? needed : config.dim;
  if (D < needed) {
    throw DomainError("embedding dimension " + std::to_string(D) + " is below the " +
                      std::to_string(needed) + " orthogonal directions the fixture needs");
  }
  const Basis basis = orthonormal_rows(needed, D, rng);
  fx.label_embeddings = Matrix(L, D);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t d = 0; d < D; ++d) fx.label_embeddings(l, d) = static_cast<float>(basis[l][d]);
  }

  const std::size_t nn = config.top_n.size();
  const std::vector<double> thresholds = planted_thresholds();
  std::vector<Sums> scene_sums;
  std::vector<RetrievalSummary> retrieval_summaries;
  for (std::size_t k = 0; k < config.scenes; ++k) {
    FixtureScene& fs = fx.scenes[k];
    const SceneLayout& layout = layouts[k];
    const GroundTruthScene& scene = fs.scene;
    fs.point_modes.assign(scene.points.size(), Category::kIncorrect);

    // Dense prediction and planted segmentation sums.
    Sums sums;
    sums.objects = K;
    sums.fractions.assign(nn, Frequencies{});
    std::vector<Point3> pred_points;
    std::vector<std::vector<float>> pred_features;
    for (const ObjectLayout& obj : layout.objects) {
      const auto q = quotas(config.mix, obj.points.size());
      std::vector<Category> modes;
      for (std::size_t c = 0; c < kCategoryCount; ++c) modes.insert(modes.end(), q[c], kAllCategories[c]);
      shuffle(modes, rng);
      std::vector<std::array<std::size_t, kCategoryCount>> counts(nn);
      for (std::size_t i = 0; i < obj.points.size(); ++i) {
        const std::size_t g = obj.points[i];
        fs.point_modes[g] = modes[i];
        const PlantedPoint p = plant_point(modes[i], obj, layout, distractors, L,
                                           config.recovery_probability, rng);
        for (std::size_t t = 0; t < nn; ++t) {
          ++counts[t][static_cast<std::size_t>(planted_category(p, config.top_n[t]))];
        }
        ++sums.points;
        if (p.mode == Category::kMissing) {
          ++sums.classes[obj.primary].fn;
          continue;
        }
        ++sums.matched;
        score_planted(p, obj, L, sums);
        if (p.ranking.front() == obj.primary) {
          ++sums.classes[obj.primary].tp;
        } else {
          ++sums.classes[obj.primary].fn;
          ++sums.classes[p.ranking.front()].fp;
        }
        pred_points.push_back(jittered(scene.points[g], rng));
        pred_features.push_back(planted_feature(p.ranking, basis, D));
      }
      for (std::size_t t = 0; t < nn; ++t) {
        for (std::size_t c = 0; c < kCategoryCount; ++c) {
          sums.fractions[t][c] +=
              static_cast<double>(counts[t][c]) / static_cast<double>(obj.points.size());
        }
      }
    }
    for (std::size_t g : layout.wall_points) {
      std::vector<std::uint32_t> ranking(L);
      std::iota(ranking.begin(), ranking.end(), 0u);
      shuffle(ranking, rng);
      pred_points.push_back(jittered(scene.points[g], rng));
      pred_features.push_back(planted_feature(ranking, basis, D));
    }
    std::vector<std::size_t> order(pred_points.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    Matrix features(order.size(), D);
    std::vector<Point3> points;
    for (std::size_t i = 0; i < order.size(); ++i) {
      points.push_back(pred_points[order[i]]);
      std::copy(pred_features[order[i]].begin(), pred_features[order[i]].end(), features.row(i).begin());
    }
    fs.dense = make_dense_prediction(std::move(points), std::move(features));
    scene_sums.push_back(sums);

    // Object prediction for retrieval.
    const auto& qs = scene_queries[k];
    const std::size_t nq = qs.size();
    fs.query_embeddings = Matrix(nq, D);
    for (std::size_t q = 0; q < nq; ++q) {
      fs.queries.push_back(qs[q].first);
      for (std::size_t d = 0; d < D; ++d) fs.query_embeddings(q, d) = static_cast<float>(basis[q][d]);
    }
    std::vector<Point3> cloud = scene.points;
    std::vector<PredictedInstance> instances;
    std::vector<double> coverage(K);
    for (std::size_t o = 0; o < K; ++o) {
      const ObjectLayout& obj = layout.objects[o];
      const double c = config.coverages[uniform(rng, 0, config.coverages.size() - 1)];
      const auto n = obj.points.size();
      const std::size_t m = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(c * static_cast<double>(n))), 1, n);
      coverage[o] = static_cast<double>(m) / static_cast<double>(n);
      PredictedInstance inst;
      inst.id = obj.id;
      inst.confidence = 0.9;
      for (std::size_t i = 0; i < m; ++i) inst.points.push_back(static_cast<std::uint32_t>(obj.points[i]));
      std::vector<double> f(basis[nq + o]);
      for (std::size_t q = 0; q < nq; ++q) {
        if (qs[q].second != o) continue;
        for (std::size_t d = 0; d < D; ++d) f[d] += basis[q][d];
      }
      inst.feature.assign(f.begin(), f.end());
      instances.push_back(std::move(inst));
    }
    std::vector<PlantedRetrieval> planted(nq);
    InstanceId decoy_id = 1000;
    for (std::size_t q = 0; q < nq; ++q) {
      const std::size_t decoys = uniform(rng, 0, config.max_decoys);
      for (std::size_t j = 0; j < decoys; ++j) {
        PredictedInstance inst;
        inst.id = decoy_id++;
        inst.confidence = 0.5;
        inst.points.push_back(static_cast<std::uint32_t>(cloud.size()));
        cloud.push_back({static_cast<float>(1000.0 + kSpacing * static_cast<double>(inst.id) + kCellCentre),
                         static_cast<float>(kCellCentre), static_cast<float>(kCellCentre)});
        inst.feature.assign(basis[q].begin(), basis[q].end());
        instances.push_back(std::move(inst));
      }
      const double c = coverage[qs[q].second];
      PlantedRetrieval& pr = planted[q];
      pr.kind = qs[q].first.kind;
      for (double t : thresholds) pr.ap.push_back(c >= t ? 1.0 / static_cast<double>(decoys + 1) : 0.0);
      pr.bucket = c >= 0.25 ? std::min<std::size_t>(decoys + 1, 10) - 1 : kNoMatchBucket;
    }
    shuffle(instances, rng);
    fs.objects = make_object_prediction(std::move(cloud), std::move(instances));
    retrieval_summaries.push_back(summarize_retrieval(planted));
  }

  // Expected reports.
  SegmentationReport& seg = fx.expected_segmentation;
  seg.top_n = config.top_n;
  Sums pooled;
  pooled.fractions.assign(nn, Frequencies{});
  std::vector<SegmentationSummary> summaries;
  for (std::size_t k = 0; k < config.scenes; ++k) {
    summaries.push_back(summarize(scene_sums[k]));
    seg.scenes.emplace_back(fx.scenes[k].scene.name, summaries.back());
    const Sums& s = scene_sums[k];
    pooled.objects += s.objects;
    pooled.points += s.points;
    pooled.matched += s.matched;
    for (std::size_t t = 0; t < nn; ++t) {
      for (std::size_t c = 0; c < kCategoryCount; ++c) pooled.fractions[t][c] += s.fractions[t][c];
    }
    pooled.score += s.score;
    pooled.score_points += s.score_points;
    pooled.syn_inlier += s.syn_inlier;
    pooled.syn_right += s.syn_right;
    pooled.syn_points += s.syn_points;
    pooled.dvs_inlier += s.dvs_inlier;
    pooled.dvs_left += s.dvs_left;
    pooled.dvs_right += s.dvs_right;
    pooled.dvs_points += s.dvs_points;
    for (const auto& [cls, c] : s.classes) {
      pooled.classes[cls].tp += c.tp;
      pooled.classes[cls].fp += c.fp;
      pooled.classes[cls].fn += c.fn;
    }
  }
  seg.pooled = summarize(pooled);
  SegmentationSummary& mean = seg.mean;
  mean.objects = pooled.objects;
  mean.points = pooled.points;
  mean.matched_points = pooled.matched;
  const auto avg = [&](auto get) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const SegmentationSummary& s : summaries) {
      const std::optional<double> v = get(s);
      if (v) {
        sum += *v;
        ++n;
      }
    }
    return mean_of(sum, n);
  };
  for (std::size_t t = 0; t < nn; ++t) {
    Frequencies f{};
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      f[c] = *avg([&](const SegmentationSummary& s) { return std::optional(s.frequencies[t][c]); });
    }
    mean.frequencies.push_back(f);
  }
  mean.ranking.mean_score = avg([](const SegmentationSummary& s) { return s.ranking.mean_score; });
  mean.ranking.synonym_inlier_rate = avg([](const SegmentationSummary& s) { return s.ranking.synonym_inlier_rate; });
  mean.ranking.dvs_inlier_rate = avg([](const SegmentationSummary& s) { return s.ranking.dvs_inlier_rate; });
  mean.ranking.synonym_under_penalty = avg([](const SegmentationSummary& s) { return s.ranking.synonym_under_penalty; });
  mean.ranking.dvs_over_penalty = avg([](const SegmentationSummary& s) { return s.ranking.dvs_over_penalty; });
  mean.ranking.dvs_under_penalty = avg([](const SegmentationSummary& s) { return s.ranking.dvs_under_penalty; });
  mean.miou = avg([](const SegmentationSummary& s) { return s.miou; });

  RetrievalReport& ret = fx.expected_retrieval;
  for (std::size_t k = 0; k < config.scenes; ++k) {
    ret.scenes.emplace_back(fx.scenes[k].scene.name, retrieval_summaries[k]);
    for (std::size_t b = 0; b < kRankBuckets; ++b) ret.mean.histogram[b] += retrieval_summaries[k].histogram[b];
  }
  const auto avg_ap = [&](ApSummary RetrievalSummary::*field) {
    ApSummary out;
    double map = 0, ap50 = 0, ap25 = 0;
    std::size_t n = 0;
    for (const RetrievalSummary& s : retrieval_summaries) {
      const ApSummary& a = s.*field;
      out.queries += a.queries;
      if (!a.map) continue;
      map += *a.map;
      ap50 += *a.ap50;
      ap25 += *a.ap25;
      ++n;
    }
    out.map = mean_of(map, n);
    out.ap50 = mean_of(ap50, n);
    out.ap25 = mean_of(ap25, n);
    return out;
  };
  ret.mean.overall = avg_ap(&RetrievalSummary::overall);
  ret.mean.synonym = avg_ap(&RetrievalSummary::synonym);
  ret.mean.depiction_synonym = avg_ap(&RetrievalSummary::depiction_synonym);
  return fx;
}

void write_fixture(const Fixture& fixture, const std::filesystem::path& out) {
  const auto dataset = out / "dataset";
  const auto dense = out / "predictions" / "dense";
  const auto object = out / "predictions" / "object";
  io::write_prompt_list(dataset / "prompt_list.txt", fixture.prompts);
  io::write_tensor(dense / "label_embeddings.olxt", fixture.label_embeddings);
  io::write_tensor(object / "label_embeddings.olxt", fixture.label_embeddings);
  for (const FixtureScene& fs : fixture.scenes) {
    const auto scene_dir = dataset / "scenes" / fs.scene.name;
    io::save_ground_truth(scene_dir, fs.scene);
    io::write_queries(scene_dir / "queries.json", fs.queries);
    io::save_prediction(dense / fs.scene.name, fs.dense);
    io::save_prediction(object / fs.scene.name, fs.objects);
    io::write_tensor(object / fs.scene.name / "query_embeddings.olxt", fs.query_embeddings);
  }
  io::write_report(fixture.expected_segmentation, out / "expected" / "segmentation_report.json",
                   io::ReportFormat::kJson);
  io::write_report(fixture.expected_retrieval, out / "expected" / "retrieval_report.json",
                   io::ReportFormat::kJson);
}

}  // namespace lexeval
