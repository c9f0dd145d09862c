#include "relforge/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relforge/errors.hpp"

namespace relforge {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool is_integer(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = s[0] == '-' ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

bool is_real(const std::string& s) {
  char* end = nullptr;
  if (s.empty()) return false;
  std::strtod(s.c_str(), &end);
  return end && *end == '\0';
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw SchemaError(path.string(), "<document>", "not valid JSON");
  }
  return j;
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, delim)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

}  // namespace

IngestResult parse_detection_annotations(const std::filesystem::path& path,
                                         const std::string& dataset) {
  json doc = load_json_file(path);
  for (const char* key : {"images", "annotations", "categories"}) {
    if (!doc.contains(key) || !doc[key].is_array()) {
      throw SchemaError(path.string(), key, "missing or not an array");
    }
  }

  std::map<std::int64_t, std::string> category_names;
  for (const auto& c : doc["categories"]) {
    if (!c.contains("id") || !c.contains("name")) {
      throw SchemaError(path.string(), "categories", "entry needs id and name");
    }
    category_names[c["id"].get<std::int64_t>()] = c["name"].get<std::string>();
  }

  struct ImageInfo {
    std::string file;
    double width = 0;
    double height = 0;
    std::vector<std::pair<std::string, NormBox>> boxes;
    bool bad_box = false;
    std::string issue;
  };
  std::map<std::int64_t, ImageInfo> by_id;
  std::vector<std::int64_t> order;
  for (const auto& img : doc["images"]) {
    for (const char* key : {"id", "file_name", "width", "height"}) {
      if (!img.contains(key)) throw SchemaError(path.string(), key, "missing");
    }
    std::int64_t id = img["id"].get<std::int64_t>();
    ImageInfo info;
    info.file = img["file_name"].get<std::string>();
    info.width = img["width"].get<double>();
    info.height = img["height"].get<double>();
    by_id[id] = info;
    order.push_back(id);
  }

  for (const auto& ann : doc["annotations"]) {
    for (const char* key : {"image_id", "bbox", "category_id"}) {
      if (!ann.contains(key)) throw SchemaError(path.string(), key, "missing");
    }
    std::int64_t image_id = ann["image_id"].get<std::int64_t>();
    auto it = by_id.find(image_id);
    if (it == by_id.end()) {
      throw SchemaError(path.string(), "image_id",
                        "annotation references unknown image " +
                            std::to_string(image_id));
    }
    std::int64_t cat = ann["category_id"].get<std::int64_t>();
    auto cit = category_names.find(cat);
    if (cit == category_names.end()) {
      throw SchemaError(path.string(), "category_id",
                        "unknown category " + std::to_string(cat));
    }
    const auto& bbox = ann["bbox"];
    if (!bbox.is_array() || bbox.size() != 4) {
      throw SchemaError(path.string(), "bbox", "expected [x, y, w, h]");
    }
    ImageInfo& info = it->second;
    double x = bbox[0].get<double>();
    double y = bbox[1].get<double>();
    double w = bbox[2].get<double>();
    double h = bbox[3].get<double>();
    NormBox box{x / info.width, y / info.height, (x + w) / info.width,
                (y + h) / info.height};
    if (!box.valid()) {
      info.bad_box = true;
      info.issue = "BoxError: image " + std::to_string(image_id) +
                   " has a degenerate or out-of-bounds bbox";
      continue;
    }
    info.boxes.emplace_back(cit->second, box);
  }

  IngestResult result;
  long index = 0;
  for (std::int64_t id : order) {
    const ImageInfo& info = by_id[id];
    if (info.bad_box) {
      ++result.skipped;
      result.issues.push_back(info.issue);
      ++index;
      continue;
    }
    SampleRecord r;
    r.id = dataset + ":" + std::to_string(id);
    r.dataset = dataset;
    r.media.kind = MediaRef::Kind::image;
    r.media.path = info.file;
    std::set<std::string> cats;
    for (const auto& [name, box] : info.boxes) {
      (void)box;
      cats.insert(name);
    }
    r.labels["categories"] = cats;
    r.boxes = info.boxes;
    r.provenance = {path.string(), index};
    result.records.push_back(std::move(r));
    ++index;
  }
  return result;
}

namespace {

// "x1;y1;x2;y2" pixel corners, normalized by the row's image dimensions.
NormBox parse_box_cell(const std::string& cell, double width, double height) {
  std::vector<std::string> parts = split(cell, ';');
  if (parts.size() != 4) throw InvalidBox("expected x1;y1;x2;y2");
  double v[4];
  for (int i = 0; i < 4; ++i) {
    if (!is_real(parts[i])) throw InvalidBox("non-numeric box coordinate");
    v[i] = std::strtod(parts[i].c_str(), nullptr);
  }
  return NormBox::checked(v[0] / width, v[1] / height, v[2] / width,
                          v[3] / height);
}

}  // namespace

IngestResult parse_attribute_table(const std::filesystem::path& path,
                                   const std::string& dataset, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw SchemaError(path.string(), "<header>", "empty file");
  }
  std::vector<std::string> header = split(line, delimiter);
  auto col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1
                              : static_cast<int>(it - header.begin());
  };
  int id_col = col("sample_id");
  if (id_col < 0) {
    throw SchemaError(path.string(), "sample_id", "header lacks sample_id");
  }
  int image_col = col("image");
  int width_col = col("width");
  int height_col = col("height");
  int clip_col = col("clip_score");
  int conf_col = col("bbox_confidence");

  IngestResult result;
  std::set<std::string> seen_ids;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split(line, delimiter);
    if (cells.size() != header.size()) {
      ++result.skipped;
      result.issues.push_back("RowError: line " + std::to_string(lineno) +
                              ": expected " + std::to_string(header.size()) +
                              " cells, got " + std::to_string(cells.size()));
      continue;
    }
    SampleRecord r;
    r.id = cells[id_col];
    r.dataset = dataset;
    r.media.kind = MediaRef::Kind::image;
    if (image_col >= 0) r.media.path = cells[image_col];
    double width = 0;
    double height = 0;
    if (width_col >= 0 && is_real(cells[width_col])) {
      width = std::strtod(cells[width_col].c_str(), nullptr);
    }
    if (height_col >= 0 && is_real(cells[height_col])) {
      height = std::strtod(cells[height_col].c_str(), nullptr);
    }
    bool row_bad = false;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& name = header[c];
      const std::string& cell = cells[c];
      if (static_cast<int>(c) == id_col || static_cast<int>(c) == image_col ||
          static_cast<int>(c) == width_col ||
          static_cast<int>(c) == height_col) {
        continue;
      }
      if (cell.empty()) continue;
      if (static_cast<int>(c) == clip_col) {
        r.clip_score = std::strtod(cell.c_str(), nullptr);
        continue;
      }
      if (static_cast<int>(c) == conf_col) {
        r.bbox_confidence = std::strtod(cell.c_str(), nullptr);
        continue;
      }
      if (name.size() > 4 && name.ends_with("_box")) {
        try {
          double w = width > 0 ? width : 1.0;
          double h = height > 0 ? height : 1.0;
          r.boxes.emplace_back(name.substr(0, name.size() - 4),
                               parse_box_cell(cell, w, h));
        } catch (const InvalidBox& e) {
          ++result.skipped;
          result.issues.push_back("BoxError: line " + std::to_string(lineno) +
                                  ": " + e.what());
          row_bad = true;
        }
        if (row_bad) break;
        continue;
      }
      if (cell == "0") {
        r.labels[name] = false;
      } else if (cell == "1") {
        r.labels[name] = true;
      } else if (is_integer(cell)) {
        r.labels[name] = static_cast<std::int64_t>(
            std::strtoll(cell.c_str(), nullptr, 10));
      } else {
        r.labels[name] = cell;
      }
    }
    if (row_bad) continue;
    if (r.id.empty() || seen_ids.count(r.id)) {
      ++result.skipped;
      result.issues.push_back("RowError: line " + std::to_string(lineno) +
                              ": missing or duplicate sample_id");
      continue;
    }
    seen_ids.insert(r.id);
    r.provenance = {path.string(), lineno};
    result.records.push_back(std::move(r));
  }
  return result;
}

IngestResult parse_video_captions(const std::filesystem::path& path,
                                  const std::string& dataset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  IngestResult result;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw SchemaError(path.string(), "line " + std::to_string(lineno),
                        "not a JSON object");
    }
    for (const char* key : {"video", "frames", "caption"}) {
      if (!j.contains(key)) throw SchemaError(path.string(), key, "missing");
    }
    std::vector<int> frames = j["frames"].get<std::vector<int>>();
    bool increasing = true;
    for (std::size_t i = 1; i < frames.size(); ++i) {
      if (frames[i] <= frames[i - 1]) increasing = false;
    }
    if (frames.empty() || !increasing) {
      ++result.skipped;
      result.issues.push_back("OrderError: line " + std::to_string(lineno) +
                              ": frame ids must be strictly increasing");
      continue;
    }
    SampleRecord r;
    r.id = j.contains("id") ? j["id"].get<std::string>()
                            : dataset + ":" + std::to_string(lineno);
    r.dataset = dataset;
    r.media.kind = MediaRef::Kind::video;
    r.media.path = j["video"].get<std::string>();
    r.media.frames = frames;
    r.labels["caption"] = j["caption"].get<std::string>();
    r.provenance = {path.string(), lineno};
    result.records.push_back(std::move(r));
  }
  return result;
}

}  // namespace relforge
