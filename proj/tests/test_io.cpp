#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "engine.hpp"
#include "lexeval/io.hpp"

namespace lexeval {
namespace {

namespace fs = std::filesystem;

class Io : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("lexeval_io_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }
  void put(const std::string& name, const std::string& text) const {
    std::ofstream(path(name), std::ios::binary) << text;
  }

  fs::path dir_;
};

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const IoError& e) {
    return e.what();
  }
  return {};
}

TEST_F(Io, PlyBinaryRoundTrip) {
  io::PointCloud c;
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(-5, 5);
  for (int i = 0; i < 100; ++i) c.points.push_back({u(rng), u(rng), u(rng)});
  c.instance_ids = std::vector<InstanceId>(100);
  c.colors = std::vector<io::Rgb>(100);
  for (int i = 0; i < 100; ++i) {
    (*c.instance_ids)[i] = i % 7 - 1;
    (*c.colors)[i] = {static_cast<std::uint8_t>(i), 2, 3};
  }
  io::write_ply(path("a.ply"), c);
  const io::PointCloud r = io::read_ply(path("a.ply"));
  EXPECT_EQ(r.points, c.points);
  EXPECT_EQ(r.instance_ids, c.instance_ids);
  EXPECT_EQ(r.colors, c.colors);
  EXPECT_FALSE(r.categories);
}

TEST_F(Io, PlyAsciiWithExtraProperties) {
  put("a.ply",
      "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\n"
      "property float x\nproperty float y\nproperty float z\nproperty float nx\n"
      "property int instance_id\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n"
      "1 2 3 0.5 7\n-1 0.25 4 0 8\n");
  const io::PointCloud r = io::read_ply(path("a.ply"));
  EXPECT_EQ(r.points, (std::vector<Point3>{{1, 2, 3}, {-1, 0.25f, 4}}));
  EXPECT_EQ(r.instance_ids, (std::vector<InstanceId>{7, 8}));
}

TEST_F(Io, PlyRejectsMalformed) {
  put("bad.ply", "ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\nend_header\n");
  EXPECT_NE(message_of([&] { io::read_ply(path("bad.ply")); }).find("bad.ply"), std::string::npos);
  put("short.ply",
      "ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
      "property float z\nend_header\nabc");
  EXPECT_THROW(io::read_ply(path("short.ply")), IoError);
  put("noz.ply", "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n1 2\n");
  EXPECT_THROW(io::read_ply(path("noz.ply")), IoError);
  EXPECT_NE(message_of([&] { io::read_ply(path("missing.ply")); }).find("missing.ply"), std::string::npos);
}

TEST_F(Io, TensorRoundTripAndLayout) {
  const Matrix m(2, 3, {1, 2, 3, 4, 5, -6.5f});
  io::write_tensor(path("m.olxt"), m);
  EXPECT_EQ(io::read_tensor(path("m.olxt")), m);
  const std::string bytes = io::read_text(path("m.olxt"));
  ASSERT_EQ(bytes.size(), 4u + 3u + 16u + 24u);
  EXPECT_EQ(bytes.substr(0, 4), "OLXT");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 2);
  EXPECT_EQ(bytes[7], 2);  // rows, little-endian u64
  EXPECT_EQ(bytes[15], 3);
}

TEST_F(Io, TensorRejectsMalformed) {
  io::write_tensor(path("m.olxt"), Matrix(2, 2));
  std::string bytes = io::read_text(path("m.olxt"));
  put("trunc.olxt", bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(io::read_tensor(path("trunc.olxt")), IoError);
  std::string magic = bytes;
  magic[0] = 'X';
  put("magic.olxt", magic);
  EXPECT_THROW(io::read_tensor(path("magic.olxt")), IoError);
  std::string dtype = bytes;
  dtype[5] = 1;
  put("dtype.olxt", dtype);
  EXPECT_THROW(io::read_tensor(path("dtype.olxt")), IoError);
}

TEST_F(Io, LabelsRoundTrip) {
  std::map<InstanceId, CategoryLabelSet> l;
  l[3].synonyms = {"cup", "mug"};
  l[3].depictions = {"cat"};
  l[3].visually_similar = {"bowl"};
  l[3].clutter_ids = {5};
  l[5].synonyms = {"table"};
  l[5].ambiguous = true;
  io::write_labels(path("labels.json"), l);
  EXPECT_EQ(io::read_labels(path("labels.json")), l);
}

TEST_F(Io, LabelsMinimalAndMalformed) {
  put("a.json", R"({"1": {"synonyms": ["chair"]}})");
  const auto l = io::read_labels(path("a.json"));
  EXPECT_EQ(l.at(1).synonyms, std::set<std::string>{"chair"});
  EXPECT_FALSE(l.at(1).ambiguous);
  put("b.json", R"({"x": {"synonyms": ["chair"]}})");
  EXPECT_THROW(io::read_labels(path("b.json")), IoError);
  put("c.json", R"({"1": {"synonyms": "chair"}})");
  EXPECT_THROW(io::read_labels(path("c.json")), IoError);
  put("d.json", "{");
  EXPECT_THROW(io::read_labels(path("d.json")), IoError);
}

TEST_F(Io, GroundTruthRoundTripAndDanglingClutter) {
  GroundTruthScene s;
  s.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  s.instance_ids = {1, 2, 3};
  s.labels[1].synonyms = {"lamp"};
  s.labels[1].clutter_ids = {2};
  s.labels[2].synonyms = {"desk"};
  s.labels[2].clutter_ids = {1};
  s.excluded = {3};
  const fs::path scene = path("scenes/room");
  fs::create_directories(scene);
  io::save_ground_truth(scene, s);
  const GroundTruthScene r = io::load_ground_truth(scene);
  EXPECT_EQ(r.name, "room");
  EXPECT_EQ(r.points, s.points);
  EXPECT_EQ(r.instance_ids, s.instance_ids);
  EXPECT_EQ(r.labels, s.labels);
  EXPECT_EQ(r.excluded, s.excluded);
  EXPECT_EQ(io::list_scenes(dir_), std::vector<std::string>{"room"});

  auto dangling = s.labels;
  dangling[1].clutter_ids = {42};
  io::write_labels(scene / "labels.json", dangling);
  const std::string msg = message_of([&] { io::load_ground_truth(scene); });
  EXPECT_NE(msg.find("labels.json"), std::string::npos) << msg;
}

TEST_F(Io, PromptListExcludedAndQueries) {
  const PromptList p({"chair", "coffee table"});
  io::write_prompt_list(path("prompts.txt"), p);
  EXPECT_EQ(io::read_prompt_list(path("prompts.txt")), p);
  put("dup.txt", "a\nb\na\n");
  EXPECT_THROW(io::read_prompt_list(path("dup.txt")), IoError);

  io::write_excluded(path("ex.json"), {4, 9});
  EXPECT_EQ(io::read_excluded(path("ex.json")), (std::set<InstanceId>{4, 9}));

  const std::vector<RetrievalQuery> q{{"cup", QueryKind::kSynonym, {1, 2}},
                                      {"red cup", QueryKind::kDepictionSynonym, {2}}};
  io::write_queries(path("q.json"), q);
  EXPECT_EQ(io::read_queries(path("q.json")), q);
}

TEST_F(Io, Annotations) {
  put("ann.json",
      R"([{"annotator": "a", "instance": 3, "synonyms": "cup, mug"},)"
      R"( {"annotator": "b", "instance": "3", "synonyms": null, "vis_sim": "bowl"}])");
  const auto a = io::read_annotations(path("ann.json"));
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].instance, "3");
  EXPECT_EQ(a[1].instance, "3");
  EXPECT_EQ(a[1].synonyms, "");
  EXPECT_EQ(a[1].vis_sim, "bowl");
}

TEST_F(Io, PredictionRoundTrip) {
  const std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  const Prediction dense = make_dense_prediction(pts, Matrix(4, 2, {1, 2, 3, 4, 5, 6, 7, 8}));
  fs::create_directories(path("dense"));
  io::save_prediction(path("dense"), dense);
  const Prediction d = io::load_prediction(path("dense"), PredictionMode::kDense);
  EXPECT_EQ(d.points, dense.points);
  EXPECT_EQ(d.features, dense.features);
  EXPECT_THROW(io::load_prediction(path("dense"), PredictionMode::kObject), IoError);

  const Prediction obj =
      make_object_prediction(pts, {{7, {0, 1, 3}, {1, 0}, 0.5}, {2, {1, 2}, {0, 1}, std::nullopt}});
  fs::create_directories(path("obj"));
  io::save_prediction(path("obj"), obj);
  const Prediction o = io::load_prediction(path("obj"));
  EXPECT_EQ(o.mode, PredictionMode::kObject);
  EXPECT_EQ(o.feature_row, obj.feature_row);
  ASSERT_EQ(o.instances.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(o.instances[k].id, obj.instances[k].id);
    EXPECT_EQ(o.instances[k].points, obj.instances[k].points);
    EXPECT_EQ(o.instances[k].feature, obj.instances[k].feature);
    EXPECT_EQ(o.instances[k].confidence, obj.instances[k].confidence);
  }
}

TEST_F(Io, PredictionManifestWithMaskFile) {
  fs::create_directories(path("p"));
  io::PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  io::write_ply(path("p/points.ply"), c);
  io::write_tensor(path("p/features.olxt"), Matrix(2, 1, {1, 2}));
  put("p/mask_4.txt", "2\n0 ");
  put("p/prediction.json",
      R"({"mode": "object", "points": "points.ply", "features": "features.olxt",)"
      R"( "instances": [{"id": 3, "confidence": 0.9, "ranges": [[1, 2]]},)"
      R"( {"id": 4, "confidence": null, "mask": "mask_4.txt"}]})");
  const Prediction p = io::load_prediction(path("p"));
  EXPECT_EQ(p.instances[0].points, std::vector<std::uint32_t>{1});
  EXPECT_EQ(p.instances[1].points, (std::vector<std::uint32_t>{0, 2}));
  EXPECT_FALSE(p.instances[1].confidence);
  EXPECT_EQ(p.feature_row, (std::vector<std::uint32_t>{1, 0, 1}));

  put("p/prediction.json",
      R"({"mode": "dense", "points": "points.ply", "features": "features.olxt"})");
  const std::string msg = message_of([&] { io::load_prediction(path("p")); });
  EXPECT_NE(msg.find("prediction.json"), std::string::npos) << msg;
}

TEST_F(Io, ExportColoursRoundTrip) {
  GroundTruthScene s;
  s.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  s.instance_ids = {4, 4, 5};
  PointCategories pc;
  pc.points = {0, 2};
  pc.categories = {Category::kSynonym, Category::kSynonym, Category::kIncorrect, Category::kClutter};
  io::export_category_pointcloud(path("viz.ply"), s, pc, 1);
  const io::PointCloud r = io::read_ply(path("viz.ply"));
  EXPECT_EQ(r.points, (std::vector<Point3>{{0, 0, 0}, {2, 0, 0}}));
  EXPECT_EQ(r.instance_ids, (std::vector<InstanceId>{4, 5}));
  EXPECT_EQ(r.colors, (std::vector<io::Rgb>{io::kSynonymColor, io::kClutterColor}));
  EXPECT_EQ(r.categories, (std::vector<std::uint8_t>{0, static_cast<std::uint8_t>(Category::kClutter)}));
  EXPECT_THROW(io::export_category_pointcloud(path("viz.ply"), s, pc, 2), DomainError);
}

TEST_F(Io, CategoryColoursDistinct) {
  std::set<io::Rgb> seen;
  for (std::size_t c = 0; c < kCategoryCount; ++c) seen.insert(io::category_color(static_cast<Category>(c)));
  EXPECT_EQ(seen.size(), kCategoryCount);
}

FixtureConfig mixed() {
  FixtureConfig c;
  c.seed = 4;
  c.scenes = 2;
  c.mix = {0.4, 0.15, 0.1, 0.1, 0.1, 0.15};
  return c;
}

TEST(Reports, SegmentationJsonRoundTrip) {
  const Fixture fx = generate_fixture(mixed());
  const SegmentationReport& r = fx.expected_segmentation;
  EXPECT_EQ(io::parse_segmentation_report(io::segmentation_report_json(r)), r);
  EXPECT_THROW(io::parse_segmentation_report(R"({"schema": "other/1"})"), IoError);
}

TEST(Reports, RetrievalJsonRoundTrip) {
  const Fixture fx = generate_fixture(mixed());
  const RetrievalReport& r = fx.expected_retrieval;
  EXPECT_EQ(io::parse_retrieval_report(io::retrieval_report_json(r)), r);
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

TEST(Reports, CsvHasOneRowPerMetric) {
  const Fixture fx = generate_fixture(mixed());
  const std::string seg = io::segmentation_report_csv(fx.expected_segmentation);
  EXPECT_EQ(seg.substr(0, seg.find('\n')), "scene,metric,value");
  // Header plus the same number of rows for each scene, mean and pooled.
  EXPECT_EQ((lines(seg) - 1) % 4, 0u);
  const std::string ret = io::retrieval_report_csv(fx.expected_retrieval);
  EXPECT_EQ((lines(ret) - 1) % 3, 0u);
  EXPECT_NE(ret.find("scene_00,"), std::string::npos);
}

TEST(Reports, UndefinedValuesAreNull) {
  SegmentationReport r;
  r.top_n = {1};
  SegmentationSummary s;
  s.frequencies.resize(1);
  r.scenes.emplace_back("empty", s);
  r.mean = s;
  r.pooled = s;
  const std::string json = io::segmentation_report_json(r);
  EXPECT_NE(json.find("null"), std::string::npos);
  EXPECT_EQ(io::parse_segmentation_report(json), r);
  EXPECT_NE(io::segmentation_report_csv(r).find(",null"), std::string::npos);
}

}  // namespace
}  // namespace lexeval
