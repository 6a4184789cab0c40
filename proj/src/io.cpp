#include "lexeval/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace lexeval::io {
namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const fs::path& path, const std::string& message) {
  throw IoError(path.string() + ": " + message);
}

template <typename T>
T load_le(const char* p) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

template <typename T>
void store_le(std::string& out, T v) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(bytes.data(), bytes.size());
}

// ---- PLY -------------------------------------------------------------

enum class PlyType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

std::optional<PlyType> ply_type(const std::string& name) {
  if (name == "char" || name == "int8") return PlyType::kInt8;
  if (name == "uchar" || name == "uint8") return PlyType::kUint8;
  if (name == "short" || name == "int16") return PlyType::kInt16;
  if (name == "ushort" || name == "uint16") return PlyType::kUint16;
  if (name == "int" || name == "int32") return PlyType::kInt32;
  if (name == "uint" || name == "uint32") return PlyType::kUint32;
  if (name == "float" || name == "float32") return PlyType::kFloat32;
  if (name == "double" || name == "float64") return PlyType::kFloat64;
  return std::nullopt;
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::kInt8:
    case PlyType::kUint8: return 1;
    case PlyType::kInt16:
    case PlyType::kUint16: return 2;
    case PlyType::kInt32:
    case PlyType::kUint32:
    case PlyType::kFloat32: return 4;
    case PlyType::kFloat64: return 8;
  }
  return 0;
}

double ply_value(PlyType t, const char* p) {
  switch (t) {
    case PlyType::kInt8: return load_le<std::int8_t>(p);
    case PlyType::kUint8: return load_le<std::uint8_t>(p);
    case PlyType::kInt16: return load_le<std::int16_t>(p);
    case PlyType::kUint16: return load_le<std::uint16_t>(p);
    case PlyType::kInt32: return load_le<std::int32_t>(p);
    case PlyType::kUint32: return load_le<std::uint32_t>(p);
    case PlyType::kFloat32: return load_le<float>(p);
    case PlyType::kFloat64: return load_le<double>(p);
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::kFloat32;
  bool is_list = false;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

// Splits on whitespace.
std::vector<std::string> words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

std::size_t parse_count(const fs::path& path, const std::string& text) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) fail(path, "bad count '" + text + "'");
  return v;
}

// ---- JSON helpers ----------------------------------------------------

Json parse_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    fail(path, std::string("invalid JSON: ") + e.what());
  }
}

std::vector<std::string> string_list(const fs::path& path, const Json& j, const std::string& key) {
  if (!j.contains(key)) return {};
  const Json& v = j.at(key);
  if (!v.is_array()) fail(path, "'" + key + "' must be a list of strings");
  std::vector<std::string> out;
  for (const Json& s : v) {
    if (!s.is_string()) fail(path, "'" + key + "' must be a list of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

InstanceId json_id(const fs::path& path, const Json& v) {
  if (!v.is_number_integer()) fail(path, "instance id must be an integer, got " + v.dump());
  const auto id = v.get<std::int64_t>();
  if (id < std::numeric_limits<InstanceId>::min() || id > std::numeric_limits<InstanceId>::max()) {
    fail(path, "instance id " + std::to_string(id) + " out of range");
  }
  return static_cast<InstanceId>(id);
}

InstanceId parse_id_key(const fs::path& path, const std::string& key) {
  std::int32_t id = 0;
  const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
  if (key.empty() || ec != std::errc() || ptr != key.data() + key.size()) {
    fail(path, "instance key '" + key + "' is not an integer");
  }
  return id;
}

Json optional_number(const std::optional<double>& v) {
  return v ? Json(*v) : Json(nullptr);
}

std::optional<double> read_optional(const Json& j, const std::string& key) {
  const Json& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::string format_double(double v) {
  std::array<char, 64> buf;
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : "null";
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void csv_row(std::string& out, const std::string& scene, const std::string& metric,
             const std::string& value) {
  out += csv_field(scene) + "," + metric + "," + value + "\n";
}

// ---- segmentation report ---------------------------------------------

const char* const kRankingKeys[] = {"mR", "R_S", "R_DVS", "P_S_under", "P_DVS_over", "P_DVS_under"};

std::array<std::optional<double>, 6> ranking_values(const SetRankingScores& r) {
  return {r.mean_score,           r.synonym_inlier_rate, r.dvs_inlier_rate,
          r.synonym_under_penalty, r.dvs_over_penalty,   r.dvs_under_penalty};
}

std::string top_key(std::size_t n) { return "top" + std::to_string(n); }

Json summary_json(const SegmentationSummary& s, const std::vector<std::size_t>& top_n) {
  Json j;
  j["objects"] = s.objects;
  j["points"] = s.points;
  j["matched_points"] = s.matched_points;
  Json freq = Json::object();
  for (std::size_t k = 0; k < s.frequencies.size() && k < top_n.size(); ++k) {
    Json f;
    for (Category c : kAllCategories) {
      f[std::string(category_name(c))] = s.frequencies[k][static_cast<std::size_t>(c)];
    }
    freq[top_key(top_n[k])] = f;
  }
  j["frequencies"] = freq;
  Json ranking;
  const auto values = ranking_values(s.ranking);
  for (std::size_t i = 0; i < values.size(); ++i) ranking[kRankingKeys[i]] = optional_number(values[i]);
  j["ranking"] = ranking;
  j["mIoU"] = optional_number(s.miou);
  return j;
}

SegmentationSummary summary_from_json(const Json& j, const std::vector<std::size_t>& top_n) {
  SegmentationSummary s;
  s.objects = j.at("objects").get<std::size_t>();
  s.points = j.at("points").get<std::size_t>();
  s.matched_points = j.at("matched_points").get<std::size_t>();
  const Json& freq = j.at("frequencies");
  for (std::size_t n : top_n) {
    if (!freq.contains(top_key(n))) continue;
    const Json& f = freq.at(top_key(n));
    Frequencies out{};
    for (Category c : kAllCategories) {
      out[static_cast<std::size_t>(c)] = f.at(std::string(category_name(c))).get<double>();
    }
    s.frequencies.push_back(out);
  }
  const Json& r = j.at("ranking");
  s.ranking.mean_score = read_optional(r, "mR");
  s.ranking.synonym_inlier_rate = read_optional(r, "R_S");
  s.ranking.dvs_inlier_rate = read_optional(r, "R_DVS");
  s.ranking.synonym_under_penalty = read_optional(r, "P_S_under");
  s.ranking.dvs_over_penalty = read_optional(r, "P_DVS_over");
  s.ranking.dvs_under_penalty = read_optional(r, "P_DVS_under");
  s.miou = read_optional(j, "mIoU");
  return s;
}

void summary_csv(std::string& out, const std::string& scene, const SegmentationSummary& s,
                 const std::vector<std::size_t>& top_n) {
  csv_row(out, scene, "objects", std::to_string(s.objects));
  csv_row(out, scene, "points", std::to_string(s.points));
  csv_row(out, scene, "matched_points", std::to_string(s.matched_points));
  for (std::size_t k = 0; k < s.frequencies.size() && k < top_n.size(); ++k) {
    for (Category c : kAllCategories) {
      csv_row(out, scene, "freq_" + top_key(top_n[k]) + "_" + std::string(category_name(c)),
              format_double(s.frequencies[k][static_cast<std::size_t>(c)]));
    }
  }
  const auto values = ranking_values(s.ranking);
  for (std::size_t i = 0; i < values.size(); ++i) {
    csv_row(out, scene, kRankingKeys[i], format_optional(values[i]));
  }
  csv_row(out, scene, "mIoU", format_optional(s.miou));
}

// ---- retrieval report ------------------------------------------------

Json ap_json(const ApSummary& a) {
  Json j;
  j["queries"] = a.queries;
  j["mAP"] = optional_number(a.map);
  j["AP50"] = optional_number(a.ap50);
  j["AP25"] = optional_number(a.ap25);
  return j;
}

ApSummary ap_from_json(const Json& j) {
  ApSummary a;
  a.queries = j.at("queries").get<std::size_t>();
  a.map = read_optional(j, "mAP");
  a.ap50 = read_optional(j, "AP50");
  a.ap25 = read_optional(j, "AP25");
  return a;
}

Json retrieval_summary_json(const RetrievalSummary& s) {
  Json j;
  j["overall"] = ap_json(s.overall);
  j["S"] = ap_json(s.synonym);
  j["S+D"] = ap_json(s.depiction_synonym);
  Json h;
  for (std::size_t b = 0; b < kRankBuckets; ++b) h[rank_bucket_name(b)] = s.histogram[b];
  j["rank_histogram"] = h;
  return j;
}

RetrievalSummary retrieval_summary_from_json(const Json& j) {
  RetrievalSummary s;
  s.overall = ap_from_json(j.at("overall"));
  s.synonym = ap_from_json(j.at("S"));
  s.depiction_synonym = ap_from_json(j.at("S+D"));
  const Json& h = j.at("rank_histogram");
  for (std::size_t b = 0; b < kRankBuckets; ++b) {
    s.histogram[b] = h.at(rank_bucket_name(b)).get<std::size_t>();
  }
  return s;
}

void retrieval_csv(std::string& out, const std::string& scene, const RetrievalSummary& s) {
  const std::pair<const char*, const ApSummary*> parts[] = {
      {"", &s.overall}, {"S_", &s.synonym}, {"S+D_", &s.depiction_synonym}};
  for (const auto& [prefix, ap] : parts) {
    const std::string p = prefix;
    csv_row(out, scene, p + "queries", std::to_string(ap->queries));
    csv_row(out, scene, p + "mAP", format_optional(ap->map));
    csv_row(out, scene, p + "AP50", format_optional(ap->ap50));
    csv_row(out, scene, p + "AP25", format_optional(ap->ap25));
  }
  for (std::size_t b = 0; b < kRankBuckets; ++b) {
    csv_row(out, scene, "rank_" + rank_bucket_name(b), std::to_string(s.histogram[b]));
  }
}

void check_schema(const Json& j, const char* expected) {
  if (!j.is_object() || !j.contains("schema") || j.at("schema") != expected) {
    throw IoError(std::string("report schema is not ") + expected);
  }
}

const fs::path& must_exist(const fs::path& path) {
  if (!fs::exists(path)) fail(path, "file not found");
  return path;
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(path, "read failed");
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(path, "cannot open for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) fail(path, "write failed");
  }
  fs::rename(tmp, path, ec);
  if (ec) fail(path, "cannot rename temporary file: " + ec.message());
}

PointCloud read_ply(const fs::path& path) {
  const std::string data = read_text(path);
  std::size_t pos = 0;
  const auto next_line = [&]() -> std::optional<std::string> {
    if (pos >= data.size()) return std::nullopt;
    std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) end = data.size();
    std::string line = data.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end + 1;
    return line;
  };
  if (next_line() != "ply") fail(path, "not a PLY file");
  bool binary = false;
  std::vector<PlyElement> elements;
  for (;;) {
    const auto line = next_line();
    if (!line) fail(path, "PLY header is not terminated");
    const auto w = words(*line);
    if (w.empty() || w[0] == "comment" || w[0] == "obj_info") continue;
    if (w[0] == "end_header") break;
    if (w[0] == "format") {
      if (w.size() < 2) fail(path, "bad format line");
      if (w[1] == "binary_little_endian") {
        binary = true;
      } else if (w[1] != "ascii") {
        fail(path, "unsupported PLY format '" + w[1] + "'");
      }
    } else if (w[0] == "element") {
      if (w.size() != 3) fail(path, "bad element line '" + *line + "'");
      elements.push_back({w[1], parse_count(path, w[2]), {}});
    } else if (w[0] == "property") {
      if (elements.empty()) fail(path, "property before any element");
      PlyProperty p;
      if (w.size() == 5 && w[1] == "list") {
        p.is_list = true;
        p.name = w[4];
      } else if (w.size() == 3) {
        const auto t = ply_type(w[1]);
        if (!t) fail(path, "unknown property type '" + w[1] + "'");
        p.type = *t;
        p.name = w[2];
      } else {
        fail(path, "bad property line '" + *line + "'");
      }
      elements.back().properties.push_back(p);
    } else {
      fail(path, "unexpected header line '" + *line + "'");
    }
  }

  std::size_t vertex = elements.size();
  for (std::size_t e = 0; e < elements.size(); ++e) {
    if (elements[e].name == "vertex") {
      vertex = e;
      break;
    }
    for (const PlyProperty& p : elements[e].properties) {
      if (p.is_list || elements[e].count > 0) {
        fail(path, "elements before 'vertex' are not supported");
      }
    }
  }
  if (vertex == elements.size()) fail(path, "no vertex element");
  const PlyElement& el = elements[vertex];
  std::map<std::string, std::size_t> column;
  std::vector<std::size_t> offset;
  std::size_t stride = 0;
  for (std::size_t i = 0; i < el.properties.size(); ++i) {
    if (el.properties[i].is_list) fail(path, "list properties on vertices are not supported");
    column[el.properties[i].name] = i;
    offset.push_back(stride);
    stride += ply_size(el.properties[i].type);
  }
  for (const char* axis : {"x", "y", "z"}) {
    if (!column.contains(axis)) fail(path, std::string("missing vertex property '") + axis + "'");
  }
  const std::size_t n = el.count;
  std::vector<double> values(n * el.properties.size());
  if (binary) {
    if (data.size() - std::min(pos, data.size()) < n * stride) fail(path, "vertex data is truncated");
    for (std::size_t i = 0; i < n; ++i) {
      const char* row = data.data() + pos + i * stride;
      for (std::size_t k = 0; k < el.properties.size(); ++k) {
        values[i * el.properties.size() + k] = ply_value(el.properties[k].type, row + offset[k]);
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto line = next_line();
      if (!line) fail(path, "vertex data is truncated");
      const auto w = words(*line);
      if (w.size() < el.properties.size()) fail(path, "short vertex row " + std::to_string(i));
      for (std::size_t k = 0; k < el.properties.size(); ++k) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(w[k].data(), w[k].data() + w[k].size(), v);
        if (ec != std::errc() || ptr != w[k].data() + w[k].size()) {
          fail(path, "bad number '" + w[k] + "' in vertex row " + std::to_string(i));
        }
        values[i * el.properties.size() + k] = v;
      }
    }
  }

  const std::size_t width = el.properties.size();
  const auto get = [&](std::size_t i, const std::string& name) {
    return values[i * width + column.at(name)];
  };
  PointCloud cloud;
  cloud.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    cloud.points[i] = {static_cast<float>(get(i, "x")), static_cast<float>(get(i, "y")),
                       static_cast<float>(get(i, "z"))};
  }
  if (column.contains("instance_id")) {
    cloud.instance_ids.emplace(n);
    for (std::size_t i = 0; i < n; ++i) (*cloud.instance_ids)[i] = static_cast<InstanceId>(get(i, "instance_id"));
  }
  if (column.contains("red") && column.contains("green") && column.contains("blue")) {
    cloud.colors.emplace(n);
    for (std::size_t i = 0; i < n; ++i) {
      (*cloud.colors)[i] = {static_cast<std::uint8_t>(get(i, "red")),
                            static_cast<std::uint8_t>(get(i, "green")),
                            static_cast<std::uint8_t>(get(i, "blue"))};
    }
  }
  if (column.contains("category")) {
    cloud.categories.emplace(n);
    for (std::size_t i = 0; i < n; ++i) {
      (*cloud.categories)[i] = static_cast<std::uint8_t>(get(i, "category"));
    }
  }
  return cloud;
}

void write_ply(const fs::path& path, const PointCloud& cloud) {
  const std::size_t n = cloud.points.size();
  if ((cloud.instance_ids && cloud.instance_ids->size() != n) ||
      (cloud.colors && cloud.colors->size() != n) ||
      (cloud.categories && cloud.categories->size() != n)) {
    fail(path, "point cloud columns have different lengths");
  }
  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(n) +
                    "\nproperty float x\nproperty float y\nproperty float z\n";
  if (cloud.instance_ids) out += "property int instance_id\n";
  if (cloud.colors) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (cloud.categories) out += "property uchar category\n";
  out += "end_header\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (float v : cloud.points[i]) store_le(out, v);
    if (cloud.instance_ids) store_le(out, (*cloud.instance_ids)[i]);
    if (cloud.colors) {
      for (std::uint8_t c : (*cloud.colors)[i]) store_le(out, c);
    }
    if (cloud.categories) store_le(out, (*cloud.categories)[i]);
  }
  write_text(path, out);
}

Matrix read_tensor(const fs::path& path) {
  const std::string data = read_text(path);
  if (data.size() < 7 || data.compare(0, 4, "OLXT") != 0) fail(path, "not an OLXT tensor");
  const auto version = static_cast<std::uint8_t>(data[4]);
  const auto dtype = static_cast<std::uint8_t>(data[5]);
  const auto rank = static_cast<std::uint8_t>(data[6]);
  if (version != 1) fail(path, "unsupported tensor version " + std::to_string(version));
  if (dtype != 0) fail(path, "unsupported tensor dtype " + std::to_string(dtype));
  if (rank != 2) fail(path, "expected a rank-2 tensor, got rank " + std::to_string(rank));
  if (data.size() < 7 + 16) fail(path, "tensor header is truncated");
  const auto rows = load_le<std::uint64_t>(data.data() + 7);
  const auto cols = load_le<std::uint64_t>(data.data() + 15);
  const std::size_t header = 23;
  if (cols != 0 && rows > (data.size() - header) / 4 / cols) fail(path, "tensor payload is truncated");
  if ((data.size() - header) != rows * cols * 4) {
    fail(path, "tensor payload has " + std::to_string(data.size() - header) + " bytes, expected " +
                   std::to_string(rows * cols * 4));
  }
  std::vector<float> values(rows * cols);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = load_le<float>(data.data() + header + 4 * i);
  }
  return Matrix(rows, cols, std::move(values));
}

void write_tensor(const fs::path& path, const Matrix& matrix) {
  std::string out = "OLXT";
  out.push_back(1);
  out.push_back(0);
  out.push_back(2);
  store_le<std::uint64_t>(out, matrix.rows());
  store_le<std::uint64_t>(out, matrix.cols());
  for (float v : matrix.data()) store_le(out, v);
  write_text(path, out);
}

std::map<InstanceId, CategoryLabelSet> read_labels(const fs::path& path) {
  const Json j = parse_json(path);
  if (!j.is_object()) fail(path, "labels must be an object keyed by instance id");
  std::map<InstanceId, CategoryLabelSet> out;
  for (const auto& [key, value] : j.items()) {
    const InstanceId id = parse_id_key(path, key);
    if (!value.is_object()) fail(path, "instance " + key + ": entry must be an object");
    CategoryLabelSet set;
    for (auto& s : string_list(path, value, "synonyms")) set.synonyms.insert(std::move(s));
    for (auto& s : string_list(path, value, "depictions")) set.depictions.insert(std::move(s));
    for (auto& s : string_list(path, value, "vis_sim")) set.visually_similar.insert(std::move(s));
    if (value.contains("clutter")) {
      if (!value.at("clutter").is_array()) fail(path, "instance " + key + ": 'clutter' must be a list");
      for (const Json& c : value.at("clutter")) set.clutter_ids.insert(json_id(path, c));
    }
    if (value.contains("ambiguous")) {
      if (!value.at("ambiguous").is_boolean()) fail(path, "instance " + key + ": 'ambiguous' must be a boolean");
      set.ambiguous = value.at("ambiguous").get<bool>();
    }
    if (!out.emplace(id, std::move(set)).second) fail(path, "duplicate instance " + key);
  }
  return out;
}

void write_labels(const fs::path& path, const std::map<InstanceId, CategoryLabelSet>& labels) {
  Json j = Json::object();
  for (const auto& [id, set] : labels) {
    Json e;
    e["synonyms"] = set.synonyms;
    e["depictions"] = set.depictions;
    e["vis_sim"] = set.visually_similar;
    e["clutter"] = set.clutter_ids;
    e["ambiguous"] = set.ambiguous;
    j[std::to_string(id)] = e;
  }
  write_text(path, j.dump(2) + "\n");
}

std::vector<RawAnnotation> read_annotations(const fs::path& path) {
  const Json j = parse_json(path);
  if (!j.is_array()) fail(path, "annotations must be a list");
  std::vector<RawAnnotation> out;
  for (const Json& a : j) {
    const auto field = [&](const char* key) -> std::string {
      if (!a.is_object() || !a.contains(key)) return {};
      const Json& v = a.at(key);
      if (v.is_string()) return v.get<std::string>();
      if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
      if (v.is_null()) return {};
      fail(path, std::string("annotation field '") + key + "' must be a string");
    };
    if (!a.is_object() || !a.contains("instance")) fail(path, "annotation without 'instance'");
    out.push_back({field("annotator"), field("instance"), field("synonyms"), field("depictions"),
                   field("vis_sim")});
  }
  return out;
}

PromptList read_prompt_list(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::string> labels;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    labels.push_back(line);
  }
  if (labels.empty()) fail(path, "prompt list is empty");
  try {
    return PromptList(std::move(labels));
  } catch (const DomainError& e) {
    fail(path, e.what());
  }
}

void write_prompt_list(const fs::path& path, const PromptList& prompts) {
  std::string out;
  for (const auto& label : prompts.labels()) out += label + "\n";
  write_text(path, out);
}

std::set<InstanceId> read_excluded(const fs::path& path) {
  const Json j = parse_json(path);
  if (!j.is_array()) fail(path, "excluded instances must be a list of integers");
  std::set<InstanceId> out;
  for (const Json& v : j) out.insert(json_id(path, v));
  return out;
}

void write_excluded(const fs::path& path, const std::set<InstanceId>& excluded) {
  write_text(path, Json(excluded).dump() + "\n");
}

std::vector<RetrievalQuery> read_queries(const fs::path& path) {
  const Json j = parse_json(path);
  if (!j.is_array()) fail(path, "queries must be a list");
  std::vector<RetrievalQuery> out;
  for (const Json& q : j) {
    if (!q.is_object() || !q.contains("query") || !q.at("query").is_string()) {
      fail(path, "query entry without a 'query' string");
    }
    RetrievalQuery query;
    query.text = q.at("query").get<std::string>();
    const std::string kind = q.value("kind", std::string("S"));
    const auto k = query_kind_from_name(kind);
    if (!k) fail(path, "query '" + query.text + "': unknown kind '" + kind + "'");
    query.kind = *k;
    if (!q.contains("targets") || !q.at("targets").is_array() || q.at("targets").empty()) {
      fail(path, "query '" + query.text + "' needs a non-empty 'targets' list");
    }
    for (const Json& t : q.at("targets")) query.targets.insert(json_id(path, t));
    out.push_back(std::move(query));
  }
  return out;
}

void write_queries(const fs::path& path, const std::vector<RetrievalQuery>& queries) {
  Json j = Json::array();
  for (const RetrievalQuery& q : queries) {
    Json e;
    e["query"] = q.text;
    e["kind"] = std::string(query_kind_name(q.kind));
    e["targets"] = q.targets;
    j.push_back(e);
  }
  write_text(path, j.dump(2) + "\n");
}

GroundTruthScene load_ground_truth(const fs::path& scene_dir) {
  const fs::path dir = scene_dir.lexically_normal();
  GroundTruthScene scene;
  scene.name = dir.has_filename() ? dir.filename().string() : dir.parent_path().filename().string();
  const fs::path ply = dir / "points.ply";
  PointCloud cloud = read_ply(must_exist(ply));
  if (!cloud.instance_ids) fail(ply, "missing vertex property 'instance_id'");
  scene.points = std::move(cloud.points);
  scene.instance_ids = std::move(*cloud.instance_ids);
  const fs::path labels = dir / "labels.json";
  scene.labels = read_labels(must_exist(labels));
  const fs::path excluded = dir / "excluded.json";
  if (fs::exists(excluded)) scene.excluded = read_excluded(excluded);
  try {
    scene.validate();
  } catch (const DomainError& e) {
    fail(labels, e.what());
  }
  return scene;
}

void save_ground_truth(const fs::path& scene_dir, const GroundTruthScene& scene) {
  PointCloud cloud;
  cloud.points = scene.points;
  cloud.instance_ids = scene.instance_ids;
  write_ply(scene_dir / "points.ply", cloud);
  write_labels(scene_dir / "labels.json", scene.labels);
  write_excluded(scene_dir / "excluded.json", scene.excluded);
}

std::vector<std::string> list_scenes(const fs::path& dataset_root) {
  const fs::path scenes = dataset_root / "scenes";
  if (!fs::is_directory(scenes)) fail(scenes, "scene directory not found");
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(scenes)) {
    if (entry.is_directory()) out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Prediction load_prediction(const fs::path& scene_dir, std::optional<PredictionMode> expected) {
  const fs::path manifest_path = scene_dir / "prediction.json";
  const Json m = parse_json(must_exist(manifest_path));
  if (!m.is_object() || !m.contains("mode") || !m.at("mode").is_string()) {
    fail(manifest_path, "manifest needs a 'mode' of \"dense\" or \"object\"");
  }
  const std::string mode_name = m.at("mode").get<std::string>();
  PredictionMode mode;
  if (mode_name == "dense") {
    mode = PredictionMode::kDense;
  } else if (mode_name == "object") {
    mode = PredictionMode::kObject;
  } else {
    fail(manifest_path, "unknown mode '" + mode_name + "'");
  }
  if (expected && *expected != mode) {
    fail(manifest_path, "prediction is in " + mode_name + " mode, expected " +
                            (*expected == PredictionMode::kDense ? "dense" : "object"));
  }
  const auto member_path = [&](const char* key) {
    if (!m.contains(key) || !m.at(key).is_string()) {
      fail(manifest_path, std::string("manifest needs a '") + key + "' path");
    }
    return must_exist(scene_dir / m.at(key).get<std::string>());
  };
  PointCloud cloud = read_ply(member_path("points"));
  Matrix features = read_tensor(member_path("features"));
  try {
    if (mode == PredictionMode::kDense) {
      if (features.rows() != cloud.points.size()) {
        fail(manifest_path, "feature tensor has " + std::to_string(features.rows()) +
                                " rows for " + std::to_string(cloud.points.size()) + " points");
      }
      return make_dense_prediction(std::move(cloud.points), std::move(features));
    }
    if (!m.contains("instances") || !m.at("instances").is_array()) {
      fail(manifest_path, "object manifest needs an 'instances' list");
    }
    const Json& list = m.at("instances");
    if (features.rows() != list.size()) {
      fail(manifest_path, "feature tensor has " + std::to_string(features.rows()) + " rows for " +
                              std::to_string(list.size()) + " instances");
    }
    std::vector<PredictedInstance> instances;
    for (std::size_t k = 0; k < list.size(); ++k) {
      const Json& e = list[k];
      if (!e.is_object() || !e.contains("id")) fail(manifest_path, "instance entry without 'id'");
      PredictedInstance inst;
      inst.id = json_id(manifest_path, e.at("id"));
      const std::string ctx = "instance " + std::to_string(inst.id);
      if (e.contains("confidence") && !e.at("confidence").is_null()) {
        if (!e.at("confidence").is_number()) fail(manifest_path, ctx + ": confidence must be a number");
        inst.confidence = e.at("confidence").get<double>();
      }
      if (e.contains("ranges")) {
        for (const Json& r : e.at("ranges")) {
          if (!r.is_array() || r.size() != 2 || !r[0].is_number_unsigned() || !r[1].is_number_unsigned()) {
            fail(manifest_path, ctx + ": ranges must be [begin, end) pairs");
          }
          const auto b = r[0].get<std::uint64_t>();
          const auto end = r[1].get<std::uint64_t>();
          if (b > end || end > cloud.points.size()) {
            fail(manifest_path, ctx + ": range [" + std::to_string(b) + ", " + std::to_string(end) +
                                    ") is outside the cloud of " + std::to_string(cloud.points.size()));
          }
          for (std::uint64_t i = b; i < end; ++i) inst.points.push_back(static_cast<std::uint32_t>(i));
        }
      } else if (e.contains("mask") && e.at("mask").is_string()) {
        const fs::path mask = must_exist(scene_dir / e.at("mask").get<std::string>());
        std::istringstream in(read_text(mask));
        for (std::string tok; in >> tok;) {
          std::uint32_t v = 0;
          const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
          if (ec != std::errc() || ptr != tok.data() + tok.size() || v >= cloud.points.size()) {
            fail(mask, "bad point index '" + tok + "'");
          }
          inst.points.push_back(v);
        }
      } else {
        fail(manifest_path, ctx + " needs 'ranges' or 'mask'");
      }
      const auto row = features.row(k);
      inst.feature.assign(row.begin(), row.end());
      instances.push_back(std::move(inst));
    }
    return make_object_prediction(std::move(cloud.points), std::move(instances));
  } catch (const DomainError& e) {
    fail(manifest_path, e.what());
  }
}

void save_prediction(const fs::path& scene_dir, const Prediction& prediction) {
  PointCloud cloud;
  cloud.points = prediction.points;
  write_ply(scene_dir / "points.ply", cloud);
  write_tensor(scene_dir / "features.olxt", prediction.features);
  Json m;
  m["mode"] = prediction.mode == PredictionMode::kDense ? "dense" : "object";
  m["points"] = "points.ply";
  m["features"] = "features.olxt";
  if (prediction.mode == PredictionMode::kObject) {
    Json list = Json::array();
    for (const PredictedInstance& inst : prediction.instances) {
      Json e;
      e["id"] = inst.id;
      e["confidence"] = optional_number(inst.confidence);
      Json ranges = Json::array();
      for (std::size_t i = 0; i < inst.points.size();) {
        std::size_t j = i + 1;
        while (j < inst.points.size() && inst.points[j] == inst.points[j - 1] + 1) ++j;
        ranges.push_back({inst.points[i], inst.points[j - 1] + 1});
        i = j;
      }
      e["ranges"] = ranges;
      list.push_back(e);
    }
    m["instances"] = list;
  }
  write_text(scene_dir / "prediction.json", m.dump(2) + "\n");
}

Rgb category_color(Category c) {
  switch (c) {
    case Category::kSynonym: return kSynonymColor;
    case Category::kDepiction: return kDepictionColor;
    case Category::kVisuallySimilar: return kVisuallySimilarColor;
    case Category::kClutter: return kClutterColor;
    case Category::kMissing: return kMissingColor;
    case Category::kIncorrect: return kIncorrectColor;
  }
  return kMissingColor;
}

void export_category_pointcloud(const fs::path& path, const GroundTruthScene& scene,
                                const PointCategories& categories, std::size_t column) {
  const std::size_t n = categories.points.size();
  if (n == 0 ? !categories.categories.empty() : categories.categories.size() % n != 0) {
    throw DomainError("category table does not match its point list");
  }
  const std::size_t width = n == 0 ? 0 : categories.categories.size() / n;
  if (n > 0 && column >= width) {
    throw DomainError("category column " + std::to_string(column) + " out of range");
  }
  PointCloud cloud;
  cloud.instance_ids.emplace();
  cloud.colors.emplace();
  cloud.categories.emplace();
  for (std::size_t e = 0; e < n; ++e) {
    const std::size_t g = categories.points[e];
    if (g >= scene.points.size()) throw DomainError("category point index out of range");
    const Category c = categories.categories[e * width + column];
    cloud.points.push_back(scene.points[g]);
    cloud.instance_ids->push_back(scene.instance_ids[g]);
    cloud.colors->push_back(category_color(c));
    cloud.categories->push_back(static_cast<std::uint8_t>(c));
  }
  write_ply(path, cloud);
}

std::string segmentation_report_json(const SegmentationReport& report) {
  Json j;
  j["schema"] = kSegmentationSchema;
  j["top_n"] = report.top_n;
  Json scenes = Json::object();
  for (const auto& [name, s] : report.scenes) scenes[name] = summary_json(s, report.top_n);
  j["scenes"] = scenes;
  j["mean"] = summary_json(report.mean, report.top_n);
  j["pooled"] = summary_json(report.pooled, report.top_n);
  return j.dump(2) + "\n";
}

std::string segmentation_report_csv(const SegmentationReport& report) {
  std::string out = "scene,metric,value\n";
  for (const auto& [name, s] : report.scenes) summary_csv(out, name, s, report.top_n);
  summary_csv(out, "(mean)", report.mean, report.top_n);
  summary_csv(out, "(pooled)", report.pooled, report.top_n);
  return out;
}

SegmentationReport parse_segmentation_report(const std::string& json_text) {
  try {
    const Json j = Json::parse(json_text);
    check_schema(j, kSegmentationSchema);
    SegmentationReport r;
    r.top_n = j.at("top_n").get<std::vector<std::size_t>>();
    for (const auto& [name, s] : j.at("scenes").items()) {
      r.scenes.emplace_back(name, summary_from_json(s, r.top_n));
    }
    r.mean = summary_from_json(j.at("mean"), r.top_n);
    r.pooled = summary_from_json(j.at("pooled"), r.top_n);
    return r;
  } catch (const Json::exception& e) {
    throw IoError(std::string("malformed segmentation report: ") + e.what());
  }
}

std::string retrieval_report_json(const RetrievalReport& report) {
  Json j;
  j["schema"] = kRetrievalSchema;
  j["pooled"] = report.pooled;
  Json scenes = Json::object();
  for (const auto& [name, s] : report.scenes) scenes[name] = retrieval_summary_json(s);
  j["scenes"] = scenes;
  j["mean"] = retrieval_summary_json(report.mean);
  return j.dump(2) + "\n";
}

std::string retrieval_report_csv(const RetrievalReport& report) {
  std::string out = "scene,metric,value\n";
  for (const auto& [name, s] : report.scenes) retrieval_csv(out, name, s);
  retrieval_csv(out, "(mean)", report.mean);
  return out;
}

RetrievalReport parse_retrieval_report(const std::string& json_text) {
  try {
    const Json j = Json::parse(json_text);
    check_schema(j, kRetrievalSchema);
    RetrievalReport r;
    r.pooled = j.at("pooled").get<bool>();
    for (const auto& [name, s] : j.at("scenes").items()) {
      r.scenes.emplace_back(name, retrieval_summary_from_json(s));
    }
    r.mean = retrieval_summary_from_json(j.at("mean"));
    return r;
  } catch (const Json::exception& e) {
    throw IoError(std::string("malformed retrieval report: ") + e.what());
  }
}

void write_report(const SegmentationReport& report, const fs::path& path, ReportFormat format) {
  write_text(path, format == ReportFormat::kJson ? segmentation_report_json(report)
                                                 : segmentation_report_csv(report));
}

void write_report(const RetrievalReport& report, const fs::path& path, ReportFormat format) {
  write_text(path, format == ReportFormat::kJson ? retrieval_report_json(report)
                                                 : retrieval_report_csv(report));
}

}  // namespace lexeval::io
