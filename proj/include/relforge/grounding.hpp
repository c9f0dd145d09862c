#pragma once

#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "relforge/box.hpp"

namespace relforge {

inline constexpr int kDefaultGrid = 32;

inline constexpr std::string_view kGroundingToken = "<grounding>";
inline constexpr std::string_view kImagePlaceholder = "<ImageHere>";
inline constexpr std::string_view kHumanPrefix = "### Human:";
inline constexpr std::string_view kAssistantPrefix = "### Assistant:";

// Top-left / bottom-right cell indices on a grid x grid patch lattice, row-major
// (bin = row * grid + col). tl must not sit below or right of br.
struct PatchIndexPair {
  int tl = 0;
  int br = 0;

  bool operator==(const PatchIndexPair&) const = default;

  static int row(int bin, int grid) { return bin / grid; }
  static int col(int bin, int grid) { return bin % grid; }

  bool in_range(int grid) const {
    return tl >= 0 && br >= 0 && tl < grid * grid && br < grid * grid;
  }
  bool ordered(int grid) const {
    return row(tl, grid) <= row(br, grid) && col(tl, grid) <= col(br, grid);
  }
};

// Quantize a valid box onto the grid. The top-left bin is the cell containing
// (x1, y1); the bottom-right bin is the cell whose far edge reaches (x2, y2), so a
// coordinate exactly on a cell boundary (including 1.0) selects the cell ending
// there. Throws InvalidBox / ConfigError (grid < 2).
PatchIndexPair encode_box(const NormBox& box, int grid = kDefaultGrid);

// Outer extent of the two cells. decode then encode is the identity; encode then
// decode moves each edge by less than one cell.
NormBox decode_pair(const PatchIndexPair& pair, int grid = kDefaultGrid);

// One grounded run. phrase is empty for img blocks with no <phrase> prefix;
// image_index is -1 for bare patch-index pairs outside an img block.
struct GroundedSpan {
  std::string phrase;
  int image_index = -1;
  std::vector<PatchIndexPair> boxes;

  bool operator==(const GroundedSpan&) const = default;
};

// <imgN> <ImageHere> </imgN> (placeholder=true, dialogue image declaration) or
// <imgN></imgN> (placeholder=false, frame reference without boxes).
struct ImageMarker {
  int image_index = 0;
  bool placeholder = false;

  bool operator==(const ImageMarker&) const = default;
};

using Segment = std::variant<std::string, GroundedSpan, ImageMarker>;

struct TokenStream {
  std::vector<Segment> segments;

  bool operator==(const TokenStream&) const = default;
};

enum class DecodeFailureKind {
  TruncatedTag,        // tag opened but never completed
  OrderingViolation,   // br cell above or left of tl cell
  OutOfRangeBin,       // bin outside [0, grid^2)
  DanglingPhrase,      // phrase with no grounding attached (or empty phrase)
  UnpairedPatch,       // odd patch token left over in a run
  BadImgBlock,         // close tag index mismatching the open tag
};

const char* to_string(DecodeFailureKind kind);

struct DecodeFailure {
  std::size_t position = 0;  // byte offset into the source text
  DecodeFailureKind kind = DecodeFailureKind::TruncatedTag;
};

struct ParseResult {
  TokenStream stream;
  std::vector<DecodeFailure> failures;

  bool ok() const { return failures.empty(); }
};

// Total best-effort parser: never throws on malformed text. Well-formed grounded
// runs become GroundedSpan/ImageMarker segments; everything else stays PlainText,
// with one DecodeFailure per defect. A structurally valid img block keeps its
// valid pairs even when sibling pairs are bad; a block with no valid pair is
// demoted to plain text alongside its failures.
ParseResult parse_grounded(std::string_view text, int grid = kDefaultGrid);

// Canonical serialization: single spaces between the tokens of a construct
// ("<phrase> text </phrase> <img1> <patch_index_A> <patch_index_B> </img1>").
// parse_grounded(render_grounded(s)) == s for every failure-free parser-produced
// stream. (Adjacent phrase-less bare-pair spans would merge on re-parse; the
// parser never emits such neighbours.)
std::string render_grounded(const TokenStream& stream);

// Decoded boxes of every grounded span, in stream order.
std::vector<NormBox> extract_boxes(const TokenStream& stream, int grid = kDefaultGrid);

// Canonical token spellings.
std::string patch_token(int bin);
std::string img_open(int index);
std::string img_close(int index);

// Every <patch_index_N> and <imgN> spelling occurring in the text, canonicalized.
// This is the must-preserve set for generation validation.
std::set<std::string> grounding_tokens_in(std::string_view text);

// Blank out every recognized special token; used for content word counts.
std::string strip_special_tokens(std::string_view text);

}  // namespace relforge
