#pragma once

// On-disk formats. All binary data is little-endian. Loaders validate what
// they return and throw IoError (unreadable or malformed files) with the
// offending path in the message.
//
// Dataset layout:
//   <dataset>/prompt_list.txt            one label per line
//   <dataset>/scenes/<scene>/points.ply  x, y, z float32 + instance_id int32
//   <dataset>/scenes/<scene>/labels.json
//   <dataset>/scenes/<scene>/excluded.json   optional list of instance ids
//   <dataset>/scenes/<scene>/queries.json    optional retrieval queries
//
// Prediction layout:
//   <predictions>/label_embeddings.olxt
//   <predictions>/<scene>/prediction.json    manifest, see load_prediction
//   <predictions>/<scene>/query_embeddings.olxt

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lexeval/labels.hpp"
#include "lexeval/prediction.hpp"
#include "lexeval/retrieval.hpp"
#include "lexeval/seg_metrics.hpp"

namespace lexeval::io {

namespace fs = std::filesystem;

using Rgb = std::array<std::uint8_t, 3>;

struct PointCloud {
  std::vector<Point3> points;
  std::optional<std::vector<InstanceId>> instance_ids;
  std::optional<std::vector<Rgb>> colors;
  std::optional<std::vector<std::uint8_t>> categories;
};

// Reads the vertex element of a binary little-endian or ASCII PLY file.
// x/y/z are required; instance_id, red/green/blue and category are picked
// up when present. Other properties are skipped.
PointCloud read_ply(const fs::path& path);

// Binary little-endian; writes the optional columns that are set.
void write_ply(const fs::path& path, const PointCloud& cloud);

// OLXT: "OLXT", version u8 (1), dtype u8 (0 = float32), rank u8, rank x
// u64 dims, row-major payload. Matrices are rank 2.
Matrix read_tensor(const fs::path& path);
void write_tensor(const fs::path& path, const Matrix& matrix);

std::map<InstanceId, CategoryLabelSet> read_labels(const fs::path& path);
void write_labels(const fs::path& path, const std::map<InstanceId, CategoryLabelSet>& labels);

std::vector<RawAnnotation> read_annotations(const fs::path& path);

PromptList read_prompt_list(const fs::path& path);
void write_prompt_list(const fs::path& path, const PromptList& prompts);

std::set<InstanceId> read_excluded(const fs::path& path);
void write_excluded(const fs::path& path, const std::set<InstanceId>& excluded);

std::vector<RetrievalQuery> read_queries(const fs::path& path);
void write_queries(const fs::path& path, const std::vector<RetrievalQuery>& queries);

// Scene directory with points.ply, labels.json and optional excluded.json.
// The scene is named after the directory. Invariant violations are
// reported as IoError naming the file.
GroundTruthScene load_ground_truth(const fs::path& scene_dir);
void save_ground_truth(const fs::path& scene_dir, const GroundTruthScene& scene);

// Scene directories under <dataset>/scenes, sorted by name.
std::vector<std::string> list_scenes(const fs::path& dataset_root);

// prediction.json:
//   {"mode": "dense", "points": "points.ply", "features": "features.olxt"}
//   {"mode": "object", "points": "points.ply", "features": "features.olxt",
//    "instances": [{"id": 3, "confidence": 0.9, "ranges": [[0, 120]]},
//                  {"id": 4, "confidence": null, "mask": "mask_4.txt"}]}
// Paths are relative to the manifest. Ranges are half-open point index
// intervals; a mask file lists point indices separated by whitespace.
// Object features have one row per instance in manifest order.
Prediction load_prediction(const fs::path& scene_dir,
                           std::optional<PredictionMode> expected = std::nullopt);
void save_prediction(const fs::path& scene_dir, const Prediction& prediction);

inline constexpr Rgb kSynonymColor{46, 204, 113};
inline constexpr Rgb kDepictionColor{52, 152, 219};
inline constexpr Rgb kVisuallySimilarColor{241, 196, 15};
inline constexpr Rgb kClutterColor{240, 148, 148};
inline constexpr Rgb kMissingColor{149, 165, 166};
inline constexpr Rgb kIncorrectColor{192, 57, 43};

Rgb category_color(Category c);

// Evaluated points coloured by their category at top-n column `column`.
void export_category_pointcloud(const fs::path& path, const GroundTruthScene& scene,
                                const PointCategories& categories, std::size_t column);

enum class ReportFormat { kJson, kCsv };

inline constexpr const char* kSegmentationSchema = "lexeval.segmentation/1";
inline constexpr const char* kRetrievalSchema = "lexeval.retrieval/1";

std::string segmentation_report_json(const SegmentationReport& report);
std::string segmentation_report_csv(const SegmentationReport& report);
SegmentationReport parse_segmentation_report(const std::string& json_text);

std::string retrieval_report_json(const RetrievalReport& report);
std::string retrieval_report_csv(const RetrievalReport& report);
RetrievalReport parse_retrieval_report(const std::string& json_text);

void write_report(const SegmentationReport& report, const fs::path& path, ReportFormat format);
void write_report(const RetrievalReport& report, const fs::path& path, ReportFormat format);

std::string read_text(const fs::path& path);
// Writes through a temporary file in the same directory, then renames.
void write_text(const fs::path& path, const std::string& text);

}  // namespace lexeval::io
