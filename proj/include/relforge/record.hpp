#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "relforge/box.hpp"

namespace relforge {

// Scalar or string-set label value. Sets serialize as sorted arrays so output is
// byte-stable.
using LabelValue = std::variant<std::string, std::int64_t, bool,
                                std::set<std::string>>;

struct MediaRef {
  enum class Kind { image, video };
  Kind kind = Kind::image;
  std::string path;
  std::vector<int> frames;  // video only, strictly increasing

  bool operator==(const MediaRef&) const = default;
};

struct Provenance {
  std::string source;
  long index = 0;  // record index or line number within the source

  bool operator==(const Provenance&) const = default;
};

// One labeled sample from any upstream dataset, normalized into the shared shape
// every later stage consumes.
struct SampleRecord {
  std::string id;
  std::string dataset;
  MediaRef media;
  std::map<std::string, LabelValue> labels;
  std::vector<std::pair<std::string, NormBox>> boxes;  // (label, box)
  std::optional<double> clip_score;       // precomputed quality inputs, if any
  std::optional<double> bbox_confidence;
  Provenance provenance;

  bool operator==(const SampleRecord&) const = default;
};

// Line-delimited record store, schema v1. Writes are atomic (temp file + rename);
// reads are strict and reject unknown fields. Throws IoError / SchemaError.
void write_records(const std::vector<SampleRecord>& records,
                   const std::filesystem::path& path);
std::vector<SampleRecord> read_records(const std::filesystem::path& path);

// Serialization of one record, exposed for tests and tooling.
std::string record_to_line(const SampleRecord& record);
SampleRecord record_from_line(const std::string& line, const std::string& path,
                              long lineno);

}  // namespace relforge
