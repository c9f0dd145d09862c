#include "relforge/record.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "relforge/errors.hpp"

namespace relforge {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kSchemaVersion = "v1";

ordered_json label_to_json(const LabelValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  const auto& set = std::get<std::set<std::string>>(v);
  ordered_json arr = ordered_json::array();
  for (const std::string& e : set) arr.push_back(e);  // std::set iterates sorted
  return arr;
}

LabelValue label_from_json(const ordered_json& j, const std::string& path,
                           const std::string& field) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_array()) {
    std::set<std::string> set;
    for (const auto& e : j) {
      if (!e.is_string()) {
        throw SchemaError(path, field, "set labels must hold strings");
      }
      set.insert(e.get<std::string>());
    }
    return set;
  }
  throw SchemaError(path, field, "unsupported label type");
}

void reject_unknown(const ordered_json& obj, const std::set<std::string>& allowed,
                    const std::string& path) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) {
      throw SchemaError(path, key, "unknown field");
    }
  }
}

}  // namespace

std::string record_to_line(const SampleRecord& r) {
  ordered_json j;
  j["schema"] = kSchemaVersion;
  j["id"] = r.id;
  j["dataset"] = r.dataset;
  ordered_json media;
  media["kind"] = r.media.kind == MediaRef::Kind::image ? "image" : "video";
  media["path"] = r.media.path;
  if (r.media.kind == MediaRef::Kind::video) media["frames"] = r.media.frames;
  j["media"] = media;
  ordered_json labels = ordered_json::object();
  for (const auto& [name, value] : r.labels) labels[name] = label_to_json(value);
  j["labels"] = labels;
  ordered_json boxes = ordered_json::array();
  for (const auto& [label, box] : r.boxes) {
    ordered_json b;
    b["label"] = label;
    b["x1"] = box.x1;
    b["y1"] = box.y1;
    b["x2"] = box.x2;
    b["y2"] = box.y2;
    boxes.push_back(b);
  }
  j["boxes"] = boxes;
  if (r.clip_score) j["clip_score"] = *r.clip_score;
  if (r.bbox_confidence) j["bbox_confidence"] = *r.bbox_confidence;
  ordered_json prov;
  prov["source"] = r.provenance.source;
  prov["index"] = r.provenance.index;
  j["provenance"] = prov;
  return j.dump();
}

SampleRecord record_from_line(const std::string& line, const std::string& path,
                              long lineno) {
  ordered_json j = ordered_json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw SchemaError(path, "line " + std::to_string(lineno), "not a JSON object");
  }
  reject_unknown(j,
                 {"schema", "id", "dataset", "media", "labels", "boxes",
                  "clip_score", "bbox_confidence", "provenance"},
                 path);
  for (const char* req : {"schema", "id", "dataset", "media", "labels", "boxes"}) {
    if (!j.contains(req)) throw SchemaError(path, req, "missing");
  }
  if (j["schema"] != kSchemaVersion) {
    throw SchemaError(path, "schema", "expected v1");
  }
  SampleRecord r;
  r.id = j["id"].get<std::string>();
  r.dataset = j["dataset"].get<std::string>();
  const auto& media = j["media"];
  reject_unknown(media, {"kind", "path", "frames"}, path);
  std::string kind = media.at("kind").get<std::string>();
  if (kind == "image") {
    r.media.kind = MediaRef::Kind::image;
  } else if (kind == "video") {
    r.media.kind = MediaRef::Kind::video;
  } else {
    throw SchemaError(path, "media.kind", kind);
  }
  r.media.path = media.at("path").get<std::string>();
  if (media.contains("frames")) {
    r.media.frames = media["frames"].get<std::vector<int>>();
  }
  for (const auto& [name, value] : j["labels"].items()) {
    r.labels[name] = label_from_json(value, path, name);
  }
  for (const auto& b : j["boxes"]) {
    reject_unknown(b, {"label", "x1", "y1", "x2", "y2"}, path);
    NormBox box{b.at("x1").get<double>(), b.at("y1").get<double>(),
                b.at("x2").get<double>(), b.at("y2").get<double>()};
    if (!box.valid()) {
      throw SchemaError(path, "boxes", "invalid box on line " +
                                           std::to_string(lineno));
    }
    r.boxes.emplace_back(b.at("label").get<std::string>(), box);
  }
  if (j.contains("clip_score")) r.clip_score = j["clip_score"].get<double>();
  if (j.contains("bbox_confidence")) {
    r.bbox_confidence = j["bbox_confidence"].get<double>();
  }
  if (j.contains("provenance")) {
    const auto& prov = j["provenance"];
    reject_unknown(prov, {"source", "index"}, path);
    r.provenance.source = prov.value("source", "");
    r.provenance.index = prov.value("index", 0L);
  }
  return r;
}

void write_records(const std::vector<SampleRecord>& records,
                   const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    for (const SampleRecord& r : records) {
      out << record_to_line(r) << '\n';
    }
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

std::vector<SampleRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<SampleRecord> records;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    records.push_back(record_from_line(line, path.string(), lineno));
  }
  return records;
}

}  // namespace relforge
