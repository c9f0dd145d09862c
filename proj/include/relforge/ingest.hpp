#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "relforge/record.hpp"

namespace relforge {

// Parse outcome with loss surfaced: emitted + skipped equals the rows/images in
// the file, and every skip carries a reason.
struct IngestResult {
  std::vector<SampleRecord> records;
  long skipped = 0;
  std::vector<std::string> issues;
};

// Detection annotations, COCO-shaped JSON:
//   {"images":[{"id","file_name","width","height"}],
//    "annotations":[{"image_id","bbox":[x,y,w,h],"category_id"}],
//    "categories":[{"id","name"}]}
// One record per image (file order): labels carry the present category names as a
// string-set under "categories"; each annotation becomes a (category, box) entry
// with pixel boxes normalized by the image dimensions. An image with any invalid
// box is skipped whole and counted. Missing schema pieces throw SchemaError.
IngestResult parse_detection_annotations(const std::filesystem::path& path,
                                         const std::string& dataset);

// Delimiter-separated attribute table with a header. Reserved columns: sample_id,
// image, width, height, clip_score, bbox_confidence, and <attr>_box holding
// "x1;y1;x2;y2" pixel corners (normalized by width/height when present, else
// treated as already normalized). Other columns become labels: "0"/"1" read as
// booleans, other integers as ints, anything else as strings; empty cells are
// absent labels. Rows with the wrong arity or bad boxes are skipped and counted.
IngestResult parse_attribute_table(const std::filesystem::path& path,
                                   const std::string& dataset,
                                   char delimiter = ',');

// Video caption manifest, one JSON object per line:
//   {"id"?, "video", "frames":[...strictly increasing...], "caption"}
// Frames out of order raise OrderError context per line (skipped, counted);
// missing keys throw SchemaError.
IngestResult parse_video_captions(const std::filesystem::path& path,
                                  const std::string& dataset);

}  // namespace relforge
