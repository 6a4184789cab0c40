// lexeval: batch evaluation of open-vocabulary 3D scene representations.
//
// Exit codes: 0 success, 1 metric-domain error, 2 I/O, schema or usage
// error.

#include <omp.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lexeval/fixtures.hpp"
#include "lexeval/io.hpp"
#include "lexeval/pipeline.hpp"

namespace {

using namespace lexeval;
namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr int kExitDomain = 1;
constexpr int kExitIo = 2;

struct Common {
  fs::path dataset;
  fs::path predictions;
  std::vector<std::string> scenes;
  double voxel = kDefaultVoxelSize;
  bool exclude_ambiguous = false;
};

std::vector<std::string> selected_scenes(const Common& c) {
  std::vector<std::string> all = io::list_scenes(c.dataset);
  if (c.scenes.empty()) return all;
  for (const std::string& s : c.scenes) {
    if (std::find(all.begin(), all.end(), s) == all.end()) {
      throw IoError(c.dataset.string() + ": no scene named '" + s + "'");
    }
  }
  std::vector<std::string> out = c.scenes;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

fs::path scene_dir(const Common& c, const std::string& scene) { return c.dataset / "scenes" / scene; }

void write_both(const auto& report, const fs::path& out, const std::string& stem) {
  io::write_report(report, out / (stem + ".json"), io::ReportFormat::kJson);
  io::write_report(report, out / (stem + ".csv"), io::ReportFormat::kCsv);
}

void warn(const std::string& scene, const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << scene << ": " << w << "\n";
}

// ---- eval-seg / export-viz ----

struct SegArgs {
  Common common;
  fs::path prompts;
  fs::path embeddings;
  std::string mode;
  std::vector<std::size_t> top_n{1, 5, 10};
  double match_distance = kDefaultVoxelSize;
  bool no_miou = false;
  bool viz = false;
  fs::path out;
};

std::optional<PredictionMode> parse_mode(const std::string& mode) {
  if (mode.empty()) return std::nullopt;
  return mode == "dense" ? PredictionMode::kDense : PredictionMode::kObject;
}

PipelineOptions pipeline_options(const SegArgs& a) {
  PipelineOptions opt;
  opt.voxel_size = a.common.voxel;
  opt.match_distance = a.match_distance;
  opt.segmentation.top_n = a.top_n;
  opt.segmentation.exclude_ambiguous = a.common.exclude_ambiguous;
  opt.segmentation.compute_miou = !a.no_miou;
  return opt;
}

struct SegInputs {
  PromptList prompts;
  LabelEmbeddings embeddings;
};

SegInputs load_seg_inputs(const SegArgs& a) {
  const fs::path prompts = a.prompts.empty() ? a.common.dataset / "prompt_list.txt" : a.prompts;
  const fs::path emb = a.embeddings.empty() ? a.common.predictions / "label_embeddings.olxt" : a.embeddings;
  SegInputs in{io::read_prompt_list(prompts), {}};
  const Matrix raw = io::read_tensor(emb);
  if (raw.rows() != in.prompts.size()) {
    throw DomainError(emb.string() + ": " + std::to_string(raw.rows()) + " embeddings for " +
                      std::to_string(in.prompts.size()) + " prompt labels");
  }
  in.embeddings = LabelEmbeddings(raw);
  return in;
}

ScenePipelineResult run_scene(const SegArgs& a, const SegInputs& in, const std::string& scene) {
  const GroundTruthScene gt = io::load_ground_truth(scene_dir(a.common, scene));
  const Prediction pred = io::load_prediction(a.common.predictions / scene, parse_mode(a.mode));
  warn(scene, pred.warnings);
  return run_segmentation(gt, pred, in.embeddings, in.prompts, pipeline_options(a));
}

int cmd_eval_seg(const SegArgs& a) {
  const SegInputs in = load_seg_inputs(a);
  std::vector<SceneSegmentation> results;
  for (const std::string& scene : selected_scenes(a.common)) {
    ScenePipelineResult r = run_scene(a, in, scene);
    if (a.viz) {
      for (std::size_t k = 0; k < a.top_n.size(); ++k) {
        io::export_category_pointcloud(a.out / "viz" / (scene + "_top" + std::to_string(a.top_n[k]) + ".ply"),
                                       r.evaluated, r.categories, k);
      }
    }
    results.push_back(std::move(r.segmentation));
  }
  write_both(make_segmentation_report(std::move(results), a.top_n), a.out, "segmentation_report");
  return 0;
}

int cmd_export_viz(const SegArgs& a, const std::string& scene, std::size_t n, const fs::path& file) {
  SegArgs one = a;
  one.top_n = {n};
  const SegInputs in = load_seg_inputs(one);
  const ScenePipelineResult r = run_scene(one, in, scene);
  io::export_category_pointcloud(file, r.evaluated, r.categories, 0);
  return 0;
}

// ---- eval-retrieval ----

struct RetArgs {
  Common common;
  std::optional<double> nms;
  std::string kind;
  bool pooled = false;
  std::optional<double> min_similarity;
  fs::path out;
};

int cmd_eval_retrieval(const RetArgs& a) {
  RetrievalPipelineOptions opt;
  opt.retrieval.resolution = a.common.voxel;
  opt.retrieval.pooled = a.pooled;
  opt.retrieval.min_similarity = a.min_similarity;
  opt.nms_threshold = a.nms;
  if (!a.kind.empty()) opt.kind = query_kind_from_name(a.kind);
  std::vector<SceneRetrieval> results;
  for (const std::string& scene : selected_scenes(a.common)) {
    const fs::path dir = scene_dir(a.common, scene);
    const GroundTruthScene gt = io::load_ground_truth(dir);
    const std::vector<RetrievalQuery> queries = io::read_queries(dir / "queries.json");
    const fs::path pred_dir = a.common.predictions / scene;
    const Prediction pred = io::load_prediction(pred_dir, PredictionMode::kObject);
    warn(scene, pred.warnings);
    const Matrix qe = io::read_tensor(pred_dir / "query_embeddings.olxt");
    results.push_back(run_retrieval(gt, queries, qe, pred, opt));
  }
  write_both(make_retrieval_report(std::move(results), opt.retrieval), a.out, "retrieval_report");
  return 0;
}

// ---- label tools ----

int cmd_curate(const fs::path& annotations, int agreement, const fs::path& labels_out,
               const fs::path& excluded_out) {
  const std::vector<RawAnnotation> raw = io::read_annotations(annotations);
  const CurationResult r = curate_scene(raw, agreement);
  io::write_labels(labels_out, r.labels);
  if (!excluded_out.empty()) io::write_excluded(excluded_out, r.unlabeled);
  return 0;
}

int cmd_queries(const Common& c, const fs::path& out, bool in_place) {
  Json counts = Json::object();
  for (const std::string& scene : selected_scenes(c)) {
    const GroundTruthScene gt = io::load_ground_truth(scene_dir(c, scene));
    const std::vector<RetrievalQuery> queries = generate_queries(gt, c.exclude_ambiguous);
    std::size_t s = 0;
    for (const RetrievalQuery& q : queries) s += q.kind == QueryKind::kSynonym;
    counts[scene] = {{"S", s}, {"S+D", queries.size() - s}};
    io::write_queries(in_place ? scene_dir(c, scene) / "queries.json" : out / scene / "queries.json", queries);
  }
  io::write_text(out / "query_counts.json", counts.dump(2) + "\n");
  return 0;
}

int cmd_stats(const Common& c, const fs::path& out) {
  Json j = Json::object();
  for (const std::string& scene : selected_scenes(c)) {
    const LabelStats s = label_stats(io::load_ground_truth(scene_dir(c, scene)));
    j[scene] = {{"objects", s.objects},
                {"unique_labels", s.unique_labels},
                {"mean_labels_per_object", s.mean_labels_per_object},
                {"avg_labels_per_object", s.avg_labels_per_object},
                {"max_labels_per_object", s.max_labels_per_object},
                {"ambiguous_objects", s.ambiguous_objects}};
  }
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    io::write_text(out, text);
  }
  return 0;
}

int cmd_clutter(const Common& c, const fs::path& out, bool in_place) {
  for (const std::string& scene : selected_scenes(c)) {
    GroundTruthScene gt = io::load_ground_truth(scene_dir(c, scene));
    const ClutterResult r = compute_clutter(gt, c.voxel);
    warn(scene, r.warnings);
    apply_clutter(gt, r);
    io::write_labels(in_place ? scene_dir(c, scene) / "labels.json" : out / scene / "labels.json", gt.labels);
  }
  return 0;
}

// ---- fixtures ----

struct FixtureArgs {
  FixtureConfig config;
  std::vector<double> mix{0.4, 0.15, 0.1, 0.1, 0.1, 0.15};
  fs::path out;
};

int cmd_fixtures(FixtureArgs a) {
  if (a.mix.size() != kCategoryCount) throw DomainError("--mix needs six fractions");
  std::copy(a.mix.begin(), a.mix.end(), a.config.mix.begin());
  write_fixture(generate_fixture(a.config), a.out);
  return 0;
}

void set_threads(std::optional<int> flag) {
  int threads = 0;
  if (flag) {
    threads = *flag;
  } else if (const char* env = std::getenv("LEXEVAL_THREADS")) {
    threads = std::atoi(env);
    if (threads <= 0) throw IoError(std::string("LEXEVAL_THREADS must be a positive integer, got '") + env + "'");
  }
  if (threads > 0) omp_set_num_threads(threads);
}

void add_common(CLI::App* cmd, Common& c, bool predictions) {
  cmd->add_option("--dataset", c.dataset, "Dataset root (prompt_list.txt, scenes/)")->required();
  if (predictions) cmd->add_option("--predictions", c.predictions, "Prediction root")->required();
  cmd->add_option("--scenes", c.scenes, "Only these scenes")->delimiter(',');
  cmd->add_flag("--exclude-ambiguous", c.exclude_ambiguous, "Skip objects flagged ambiguous");
}

void add_voxel(CLI::App* cmd, Common& c) {
  cmd->add_option("--voxel", c.voxel, "Voxel size in meters")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tiered open-vocabulary evaluation of 3D scene representations"};
  app.require_subcommand(1);
  std::optional<int> threads;
  app.add_option("--threads", threads, "Worker threads (overrides LEXEVAL_THREADS)")
      ->check(CLI::PositiveNumber);

  SegArgs seg;
  auto* eval_seg = app.add_subcommand("eval-seg", "Tiered segmentation metrics for dense or object predictions");
  add_common(eval_seg, seg.common, true);
  add_voxel(eval_seg, seg.common);
  eval_seg->add_option("--prompts", seg.prompts, "Prompt list (default <dataset>/prompt_list.txt)");
  eval_seg->add_option("--embeddings", seg.embeddings,
                       "Label embeddings (default <predictions>/label_embeddings.olxt)");
  eval_seg->add_option("--mode", seg.mode, "Require this prediction mode")
      ->check(CLI::IsMember({"dense", "object"}));
  eval_seg->add_option("--top-n", seg.top_n, "Top-N values")->delimiter(',');
  eval_seg->add_option("--match-distance", seg.match_distance, "Point matching radius in meters")
      ->check(CLI::PositiveNumber);
  eval_seg->add_flag("--no-miou", seg.no_miou, "Skip the closed-set mIoU baseline");
  eval_seg->add_flag("--viz", seg.viz, "Write category-coloured PLY files under <out>/viz");
  eval_seg->add_option("--out", seg.out, "Output directory")->required();

  SegArgs viz;
  std::string viz_scene;
  std::size_t viz_n = 1;
  fs::path viz_file;
  auto* export_viz = app.add_subcommand("export-viz", "Category-coloured point cloud of one scene");
  add_common(export_viz, viz.common, true);
  add_voxel(export_viz, viz.common);
  export_viz->add_option("--prompts", viz.prompts, "Prompt list");
  export_viz->add_option("--embeddings", viz.embeddings, "Label embeddings");
  export_viz->add_option("--mode", viz.mode, "Require this prediction mode")
      ->check(CLI::IsMember({"dense", "object"}));
  export_viz->add_option("--match-distance", viz.match_distance, "Point matching radius")
      ->check(CLI::PositiveNumber);
  export_viz->add_option("--scene", viz_scene, "Scene name")->required();
  export_viz->add_option("--top-n", viz_n, "Colour by the category at this N")->check(CLI::PositiveNumber);
  export_viz->add_option("--out", viz_file, "Output PLY file")->required();

  RetArgs ret;
  auto* eval_ret = app.add_subcommand("eval-retrieval", "Object retrieval AP and query rank counts");
  add_common(eval_ret, ret.common, true);
  add_voxel(eval_ret, ret.common);
  eval_ret->add_option("--nms", ret.nms, "Suppress instances overlapping above this IoU")
      ->check(CLI::Range(0.0, 1.0));
  eval_ret->add_option("--kind", ret.kind, "Only this query kind")->check(CLI::IsMember({"S", "S+D"}));
  eval_ret->add_flag("--pooled", ret.pooled, "Pool detections across queries");
  eval_ret->add_option("--min-similarity", ret.min_similarity, "Ignore predictions below this similarity");
  eval_ret->add_option("--out", ret.out, "Output directory")->required();

  fs::path annotations, labels_out, excluded_out;
  int agreement = kDefaultAgreementThreshold;
  auto* curate = app.add_subcommand("curate", "Merge raw annotations into tiered labels");
  curate->add_option("--annotations", annotations, "Annotation JSON list")->required();
  curate->add_option("--agreement", agreement, "Annotators that must share a synonym")
      ->check(CLI::PositiveNumber);
  curate->add_option("--out", labels_out, "labels.json to write")->required();
  curate->add_option("--excluded-out", excluded_out, "Write unlabeled instances here");

  Common q_common;
  fs::path q_out;
  bool q_in_place = false;
  auto* queries = app.add_subcommand("queries", "Generate retrieval queries");
  add_common(queries, q_common, false);
  queries->add_option("--out", q_out, "Output directory (per-scene queries.json, query_counts.json)")
      ->required();
  queries->add_flag("--in-place", q_in_place, "Write queries.json into the dataset scenes");

  Common s_common;
  fs::path s_out;
  auto* stats = app.add_subcommand("stats", "Per-scene label statistics");
  add_common(stats, s_common, false);
  stats->add_option("--out", s_out, "JSON file (default stdout)");

  Common c_common;
  fs::path c_out;
  bool c_in_place = false;
  auto* clutter = app.add_subcommand("clutter", "Recompute clutter neighbours from box overlap");
  add_common(clutter, c_common, false);
  clutter->add_option("--min-extent", c_common.voxel, "Minimum box extent in meters")
      ->check(CLI::PositiveNumber);
  auto* c_out_opt = clutter->add_option("--out", c_out, "Output directory (per-scene labels.json)");
  auto* c_in_place_opt = clutter->add_flag("--in-place", c_in_place, "Rewrite the dataset labels.json");
  c_out_opt->excludes(c_in_place_opt);

  FixtureArgs fx;
  auto* fixtures = app.add_subcommand("fixtures", "Synthetic datasets with planted expectations");
  fixtures->require_subcommand(1);
  auto* generate = fixtures->add_subcommand("generate", "Write a fixture and its expected reports");
  FixtureConfig& cfg = fx.config;
  generate->add_option("--seed", cfg.seed, "Random seed");
  generate->add_option("--out", fx.out, "Output directory")->required();
  generate->add_option("--scenes", cfg.scenes, "Scene count")->check(CLI::PositiveNumber);
  generate->add_option("--objects", cfg.objects, "Objects per scene")->check(CLI::PositiveNumber);
  generate->add_option("--points", cfg.points_per_object, "Maximum points per object")
      ->check(CLI::PositiveNumber);
  generate->add_option("--synonyms", cfg.synonyms, "Synonyms per object");
  generate->add_option("--depictions", cfg.depictions, "Depictions per object");
  generate->add_option("--visually-similar", cfg.visually_similar, "Visually similar labels per object");
  generate->add_option("--distractors", cfg.distractors, "Labels of no object");
  generate->add_option("--dim", cfg.dim, "Embedding dimension (0: smallest sufficient)");
  generate->add_option("--mix", fx.mix,
                       "Top-1 outcome fractions: synonym,depiction,visually_similar,clutter,missing,incorrect")
      ->delimiter(',');
  generate->add_option("--recovery", cfg.recovery_probability, "Chance of a synonym within the top 10")
      ->check(CLI::Range(0.0, 1.0));
  generate->add_option("--ambiguous", cfg.ambiguous_probability, "Chance an object is flagged ambiguous")
      ->check(CLI::Range(0.0, 1.0));
  generate->add_option("--max-decoys", cfg.max_decoys, "Decoys outranking each retrieval target");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitIo;
  }

  try {
    set_threads(threads);
    if (*eval_seg) return cmd_eval_seg(seg);
    if (*export_viz) return cmd_export_viz(viz, viz_scene, viz_n, viz_file);
    if (*eval_ret) return cmd_eval_retrieval(ret);
    if (*curate) return cmd_curate(annotations, agreement, labels_out, excluded_out);
    if (*queries) return cmd_queries(q_common, q_out, q_in_place);
    if (*stats) return cmd_stats(s_common, s_out);
    if (*clutter) {
      if (c_out.empty() && !c_in_place) throw IoError("clutter needs --out or --in-place");
      return cmd_clutter(c_common, c_out, c_in_place);
    }
    if (*generate) return cmd_fixtures(fx);
  } catch (const DomainError& e) {
    std::cerr << "error[domain]: " << e.what() << "\n";
    return kExitDomain;
  } catch (const IoError& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
