#pragma once

#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordance/image.hpp"
#include "affordance/types.hpp"

namespace affordance {

enum class Split { train, test };

inline std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw Error(Errc::parse, "unknown split '" + s + "'");
}

struct DatasetRecord {
  std::string id;
  std::string image_ref;
  std::string object_category;
  std::string action;
  std::vector<Point2D> points;
  std::optional<std::string> part_mask_ref;
  Split split = Split::test;
  std::string source;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

/// Carrier for a prediction produced by an external model.
struct PredictionRecord {
  std::string record_id;
  std::filesystem::path heatmap_ref;
};

struct Violation {
  std::string field;
  std::string message;
  friend bool operator==(const Violation&, const Violation&) = default;
};

using ValidationReport = std::vector<Violation>;

/// Violations are returned as data; an empty report means the record is valid
/// for an image of the given size.
inline ValidationReport validate_record(const DatasetRecord& record, ImageSize image_size) {
  ValidationReport report;
  if (record.id.empty()) report.push_back({"id", "id empty"});
  if (record.image_ref.empty()) report.push_back({"image_ref", "image_ref empty"});
  if (record.object_category.empty()) report.push_back({"object_category", "object_category empty"});
  if (record.action.empty()) report.push_back({"action", "action empty"});
  if (record.points.empty()) report.push_back({"points", "points empty"});
  for (std::size_t i = 0; i < record.points.size(); ++i) {
    const Point2D& p = record.points[i];
    const std::string field = "points[" + std::to_string(i) + "]";
    if (!p.finite()) {
      report.push_back({field, "point not finite"});
    } else if (!p.inside(image_size.width, image_size.height)) {
      report.push_back({field, "point out of bounds"});
    }
  }
  if (record.part_mask_ref && record.part_mask_ref->empty()) {
    report.push_back({"part_mask_ref", "part_mask_ref empty"});
  }
  return report;
}

// --- JSON ------------------------------------------------------------------

inline nlohmann::json points_to_json(const std::vector<Point2D>& points) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : points) out.push_back({p.u, p.v});
  return out;
}

inline std::vector<Point2D> points_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(Errc::parse, "points must be an array");
  std::vector<Point2D> points;
  for (const auto& item : j) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_number() || !item[1].is_number()) {
      throw Error(Errc::parse, "each point must be a [u, v] number pair");
    }
    points.push_back({item[0].get<double>(), item[1].get<double>()});
  }
  return points;
}

inline nlohmann::json to_json(const DatasetRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["image_ref"] = r.image_ref;
  j["object_category"] = r.object_category;
  j["action"] = r.action;
  j["points"] = points_to_json(r.points);
  j["part_mask_ref"] = r.part_mask_ref ? nlohmann::json(*r.part_mask_ref) : nlohmann::json(nullptr);
  j["split"] = to_string(r.split);
  j["source"] = r.source;
  return j;
}

inline DatasetRecord record_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys{"id",     "image_ref",     "object_category", "action",
                                           "points", "part_mask_ref", "split",           "source"};
  if (!j.is_object()) throw Error(Errc::parse, "record must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw Error(Errc::parse, "unexpected key '" + key + "'");
  }
  for (const auto& key : kKeys) {
    if (!j.contains(key)) throw Error(Errc::parse, "missing key '" + key + "'");
  }
  auto str = [&](const char* key) {
    if (!j.at(key).is_string()) throw Error(Errc::parse, std::string("'") + key + "' must be a string");
    return j.at(key).get<std::string>();
  };
  DatasetRecord r;
  r.id = str("id");
  r.image_ref = str("image_ref");
  r.object_category = str("object_category");
  r.action = str("action");
  r.points = points_from_json(j.at("points"));
  if (!j.at("part_mask_ref").is_null()) r.part_mask_ref = str("part_mask_ref");
  r.split = parse_split(str("split"));
  r.source = str("source");
  return r;
}

// --- Dataset loading ---------------------------------------------------------

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct DatasetManifest {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_split;
  std::size_t object_categories = 0;
  std::size_t actions = 0;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<DatasetRecord> records;
  DatasetManifest manifest;
  std::vector<LineError> errors;

  std::filesystem::path resolve(const std::string& ref) const { return root / ref; }
};

struct LoadOptions {
  /// Reject records whose image_ref does not exist on disk.
  bool require_images = true;
  /// Decode each image and run validate_record against its size (slow at scale).
  bool validate_points = false;
};

inline DatasetManifest summarize(const std::vector<DatasetRecord>& records) {
  DatasetManifest m;
  std::set<std::string> categories;
  std::set<std::string> actions;
  m.total = records.size();
  for (const auto& r : records) {
    ++m.per_split[to_string(r.split)];
    categories.insert(r.object_category);
    actions.insert(r.action);
  }
  m.object_categories = categories.size();
  m.actions = actions.size();
  return m;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  return {{"total", m.total},
          {"per_split", m.per_split},
          {"object_categories", m.object_categories},
          {"actions", m.actions}};
}

/// Loads `<dir>/records.jsonl`. Malformed lines are reported and skipped;
/// a duplicate id is fatal.
inline Dataset load_dataset(const std::filesystem::path& dir, LoadOptions options = {}) {
  const auto path = dir / "records.jsonl";
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "missing file: " + path.string());

  Dataset ds;
  ds.root = dir;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    DatasetRecord record;
    try {
      record = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      ds.errors.push_back({line_no, std::string("malformed JSON: ") + e.what()});
      continue;
    } catch (const Error& e) {
      ds.errors.push_back({line_no, e.what()});
      continue;
    }
    if (!seen.insert(record.id).second) {
      throw Error(Errc::parse, "duplicate id '" + record.id + "' at line " + std::to_string(line_no));
    }
    // Structural checks only; bounds need the real image size.
    constexpr int kUnbounded = std::numeric_limits<int>::max();
    if (const auto report = validate_record(record, {kUnbounded, kUnbounded}); !report.empty()) {
      ds.errors.push_back({line_no, report.front().field + ": " + report.front().message});
      continue;
    }
    if (options.require_images || options.validate_points) {
      const auto image_path = ds.resolve(record.image_ref);
      if (!std::filesystem::is_regular_file(image_path)) {
        ds.errors.push_back({line_no, "image_ref not found: " + record.image_ref});
        continue;
      }
      if (options.validate_points) {
        const auto report = validate_record(record, image_size(image_path));
        if (!report.empty()) {
          ds.errors.push_back({line_no, report.front().field + ": " + report.front().message});
          continue;
        }
      }
    }
    ds.records.push_back(std::move(record));
  }
  ds.manifest = summarize(ds.records);
  return ds;
}

inline void write_records(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

}  // namespace affordance
