#include "relforge/grounding.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

namespace relforge {

namespace {

// Snap coordinates sitting within epsilon of a cell boundary onto it, so exact
// boundaries survive the round trip through division for any grid size.
double snapped(double coord, int grid) {
  double s = coord * grid;
  double r = std::nearbyint(s);
  if (std::abs(s - r) < 1e-9) return r;
  return s;
}

int clamp_cell(int k, int grid) {
  if (k < 0) return 0;
  if (k >= grid) return grid - 1;
  return k;
}

// Cell containing the coordinate; 1.0 falls into the last cell.
int cell_floor(double coord, int grid) {
  return clamp_cell(static_cast<int>(std::floor(snapped(coord, grid))), grid);
}

// Cell whose far edge reaches the coordinate; a coordinate exactly on a cell
// boundary selects the cell ending there.
int cell_reach(double coord, int grid) {
  return clamp_cell(static_cast<int>(std::ceil(snapped(coord, grid))) - 1, grid);
}

void check_grid(int grid) {
  if (grid < 2) {
    throw ConfigError("patch grid must be at least 2, got " + std::to_string(grid));
  }
}

}  // namespace

PatchIndexPair encode_box(const NormBox& box, int grid) {
  check_grid(grid);
  if (!box.valid()) {
    throw InvalidBox("encode_box: invalid box");
  }
  PatchIndexPair p;
  p.tl = cell_floor(box.y1, grid) * grid + cell_floor(box.x1, grid);
  p.br = cell_reach(box.y2, grid) * grid + cell_reach(box.x2, grid);
  return p;
}

NormBox decode_pair(const PatchIndexPair& pair, int grid) {
  check_grid(grid);
  if (!pair.in_range(grid)) {
    throw InvalidPair("decode_pair: bin outside grid");
  }
  if (!pair.ordered(grid)) {
    throw InvalidPair("decode_pair: top-left below or right of bottom-right");
  }
  const double g = grid;
  return NormBox{PatchIndexPair::col(pair.tl, grid) / g,
                 PatchIndexPair::row(pair.tl, grid) / g,
                 (PatchIndexPair::col(pair.br, grid) + 1) / g,
                 (PatchIndexPair::row(pair.br, grid) + 1) / g};
}

const char* to_string(DecodeFailureKind kind) {
  switch (kind) {
    case DecodeFailureKind::TruncatedTag: return "truncated_tag";
    case DecodeFailureKind::OrderingViolation: return "ordering_violation";
    case DecodeFailureKind::OutOfRangeBin: return "out_of_range_bin";
    case DecodeFailureKind::DanglingPhrase: return "dangling_phrase";
    case DecodeFailureKind::UnpairedPatch: return "unpaired_patch";
    case DecodeFailureKind::BadImgBlock: return "bad_img_block";
  }
  return "unknown";
}

std::string patch_token(int bin) {
  return "<patch_index_" + std::to_string(bin) + ">";
}

std::string img_open(int index) { return "<img" + std::to_string(index) + ">"; }

std::string img_close(int index) { return "</img" + std::to_string(index) + ">"; }

namespace {

constexpr std::string_view kPhraseOpen = "<phrase>";
constexpr std::string_view kPhraseClose = "</phrase>";
constexpr std::string_view kPatchPrefix = "<patch_index_";

bool starts_with(std::string_view text, std::size_t pos, std::string_view prefix) {
  return text.size() - pos >= prefix.size() &&
         text.compare(pos, prefix.size(), prefix) == 0;
}

std::size_t skip_ws(std::string_view text, std::size_t pos) {
  while (pos < text.size() &&
         (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n' ||
          text[pos] == '\r')) {
    ++pos;
  }
  return pos;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

struct IntTag {
  bool ok = false;
  int value = 0;
  std::size_t end = 0;
};

// prefix digits+ '>' at pos; value saturates instead of overflowing so absurd
// bins still read as out-of-range.
IntTag match_int_tag(std::string_view text, std::size_t pos,
                     std::string_view prefix) {
  IntTag t;
  if (!starts_with(text, pos, prefix)) return t;
  std::size_t p = pos + prefix.size();
  if (p >= text.size() || !std::isdigit(static_cast<unsigned char>(text[p]))) {
    return t;
  }
  long long value = 0;
  while (p < text.size() && std::isdigit(static_cast<unsigned char>(text[p]))) {
    value = value * 10 + (text[p] - '0');
    if (value > 1'000'000'000LL) value = 1'000'000'000LL;
    ++p;
  }
  if (p >= text.size() || text[p] != '>') return t;
  t.ok = true;
  t.value = static_cast<int>(value);
  t.end = p + 1;
  return t;
}

IntTag match_patch_token(std::string_view text, std::size_t pos) {
  return match_int_tag(text, pos, kPatchPrefix);
}

IntTag match_img_open(std::string_view text, std::size_t pos) {
  return match_int_tag(text, pos, "<img");
}

IntTag match_img_close(std::string_view text, std::size_t pos) {
  return match_int_tag(text, pos, "</img");
}

// Outcome of trying to read one construct. On ok, [start, end) is replaced by
// segs; otherwise the region stays plain text. fails are reported either way.
struct Attempt {
  bool ok = false;
  std::size_t end = 0;
  std::vector<Segment> segs;
  std::vector<DecodeFailure> fails;
};

// Pair up a run of patch token values and validate each pair.
std::vector<PatchIndexPair> pair_up(const std::vector<int>& values,
                                    const std::vector<std::size_t>& positions,
                                    int grid, std::vector<DecodeFailure>& fails) {
  std::vector<PatchIndexPair> pairs;
  std::size_t i = 0;
  for (; i + 1 < values.size(); i += 2) {
    PatchIndexPair p{values[i], values[i + 1]};
    if (!p.in_range(grid)) {
      fails.push_back({positions[i], DecodeFailureKind::OutOfRangeBin});
    } else if (!p.ordered(grid)) {
      fails.push_back({positions[i], DecodeFailureKind::OrderingViolation});
    } else {
      pairs.push_back(p);
    }
  }
  if (i < values.size()) {
    fails.push_back({positions[i], DecodeFailureKind::UnpairedPatch});
  }
  return pairs;
}

// Bare run of patch tokens outside any img block. Consumes whitespace between
// tokens but not after the last one.
Attempt attempt_bare_pairs(std::string_view text, std::size_t start, int grid) {
  Attempt a;
  std::vector<int> values;
  std::vector<std::size_t> positions;
  std::size_t pos = start;
  std::size_t last_end = start;
  while (true) {
    IntTag t = match_patch_token(text, pos);
    if (!t.ok) break;
    values.push_back(t.value);
    positions.push_back(pos);
    last_end = t.end;
    std::size_t next = skip_ws(text, t.end);
    if (!starts_with(text, next, kPatchPrefix)) break;
    pos = next;
  }
  if (values.empty()) {
    a.fails.push_back({start, DecodeFailureKind::TruncatedTag});
    a.end = start + 1;
    return a;
  }
  std::vector<PatchIndexPair> pairs = pair_up(values, positions, grid, a.fails);
  a.end = last_end;
  if (!pairs.empty()) {
    a.ok = true;
    a.segs.push_back(GroundedSpan{"", -1, std::move(pairs)});
  }
  return a;
}

// <imgN> ... </imgN>: either an image marker (placeholder or empty) or a block of
// patch pairs. Requires an img open tag at start.
Attempt attempt_img_block(std::string_view text, std::size_t start, int grid) {
  Attempt a;
  IntTag open = match_img_open(text, start);
  std::size_t pos = skip_ws(text, open.end);

  auto close_or_fail = [&](bool placeholder) {
    IntTag close = match_img_close(text, pos);
    if (!close.ok) {
      a.fails.push_back({start, DecodeFailureKind::TruncatedTag});
      a.end = pos > start ? pos : start + 1;
      return;
    }
    if (close.value != open.value) {
      a.fails.push_back({pos, DecodeFailureKind::BadImgBlock});
      a.end = close.end;
      return;
    }
    a.ok = true;
    a.segs.push_back(ImageMarker{open.value, placeholder});
    a.end = close.end;
  };

  if (starts_with(text, pos, kImagePlaceholder)) {
    pos = skip_ws(text, pos + kImagePlaceholder.size());
    close_or_fail(true);
    return a;
  }
  if (starts_with(text, pos, "</img")) {
    close_or_fail(false);
    return a;
  }

  std::vector<int> values;
  std::vector<std::size_t> positions;
  while (true) {
    if (starts_with(text, pos, "</img")) {
      IntTag close = match_img_close(text, pos);
      if (!close.ok) {
        a.fails.push_back({start, DecodeFailureKind::TruncatedTag});
        a.end = pos;
        return a;
      }
      if (close.value != open.value) {
        a.fails.push_back({pos, DecodeFailureKind::BadImgBlock});
        a.end = close.end;
        return a;
      }
      std::vector<PatchIndexPair> pairs = pair_up(values, positions, grid, a.fails);
      a.end = close.end;
      if (!pairs.empty()) {
        a.ok = true;
        a.segs.push_back(GroundedSpan{"", open.value, std::move(pairs)});
      }
      return a;
    }
    IntTag t = match_patch_token(text, pos);
    if (!t.ok) {
      // Block content is neither a patch token nor a close tag.
      a.fails.push_back({pos < text.size() ? pos : start,
                         DecodeFailureKind::TruncatedTag});
      a.end = pos > start ? pos : start + 1;
      return a;
    }
    values.push_back(t.value);
    positions.push_back(pos);
    pos = skip_ws(text, t.end);
  }
}

// <phrase> text </phrase> followed by an img block or bare pairs.
Attempt attempt_phrase(std::string_view text, std::size_t start, int grid) {
  Attempt a;
  std::size_t body = start + kPhraseOpen.size();
  std::size_t close = text.find(kPhraseClose, body);
  if (close == std::string_view::npos) {
    a.fails.push_back({start, DecodeFailureKind::DanglingPhrase});
    a.end = body;
    return a;
  }
  std::string phrase = trim(text.substr(body, close - body));
  std::size_t after = close + kPhraseClose.size();
  if (phrase.empty()) {
    a.fails.push_back({start, DecodeFailureKind::DanglingPhrase});
    a.end = after;
    return a;
  }
  std::size_t pos = skip_ws(text, after);

  Attempt inner;
  if (match_img_open(text, pos).ok) {
    inner = attempt_img_block(text, pos, grid);
  } else if (starts_with(text, pos, kPatchPrefix)) {
    inner = attempt_bare_pairs(text, pos, grid);
  } else {
    a.fails.push_back({start, DecodeFailureKind::DanglingPhrase});
    a.end = after;
    return a;
  }

  a.fails = std::move(inner.fails);
  a.end = inner.end;
  if (!inner.ok) {
    return a;
  }
  if (auto* span = std::get_if<GroundedSpan>(&inner.segs.front())) {
    span->phrase = std::move(phrase);
    a.ok = true;
    a.segs = std::move(inner.segs);
    return a;
  }
  // Phrase attached to an image marker carries no boxes: the phrase dangles but
  // the marker itself is kept.
  a.fails.push_back({start, DecodeFailureKind::DanglingPhrase});
  a.ok = true;
  a.segs.push_back(std::string(text.substr(start, pos - start)));
  a.segs.insert(a.segs.end(), inner.segs.begin(), inner.segs.end());
  return a;
}

}  // namespace

ParseResult parse_grounded(std::string_view text, int grid) {
  check_grid(grid);
  ParseResult result;
  std::string plain;
  std::size_t plain_from = 0;

  auto flush_plain = [&](std::size_t upto) {
    if (upto > plain_from) {
      plain.append(text.substr(plain_from, upto - plain_from));
    }
    if (!plain.empty()) {
      result.stream.segments.push_back(std::move(plain));
      plain.clear();
    }
  };

  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '<') {
      ++i;
      continue;
    }
    Attempt a;
    if (starts_with(text, i, kPhraseOpen)) {
      a = attempt_phrase(text, i, grid);
    } else if (starts_with(text, i, kPatchPrefix)) {
      a = attempt_bare_pairs(text, i, grid);
    } else if (match_img_open(text, i).ok) {
      a = attempt_img_block(text, i, grid);
    } else {
      ++i;
      continue;
    }
    for (const DecodeFailure& f : a.fails) result.failures.push_back(f);
    if (a.ok) {
      flush_plain(i);
      for (Segment& s : a.segs) {
        if (auto* str = std::get_if<std::string>(&s); str && str->empty()) continue;
        result.stream.segments.push_back(std::move(s));
      }
      plain_from = a.end;
      i = a.end;
    } else {
      // Failed region stays plain; resume past it so inner defects are not
      // re-reported.
      i = a.end > i ? a.end : i + 1;
    }
  }
  flush_plain(text.size());
  return result;
}

std::string render_grounded(const TokenStream& stream) {
  std::string out;
  for (const Segment& seg : stream.segments) {
    if (const auto* s = std::get_if<std::string>(&seg)) {
      out += *s;
      continue;
    }
    if (const auto* m = std::get_if<ImageMarker>(&seg)) {
      out += img_open(m->image_index);
      out += m->placeholder ? " <ImageHere> " : " ";
      out += img_close(m->image_index);
      continue;
    }
    const auto& span = std::get<GroundedSpan>(seg);
    std::vector<std::string> parts;
    if (!span.phrase.empty()) {
      parts.emplace_back(kPhraseOpen);
      parts.push_back(span.phrase);
      parts.emplace_back(kPhraseClose);
    }
    if (span.image_index >= 0) parts.push_back(img_open(span.image_index));
    for (const PatchIndexPair& p : span.boxes) {
      parts.push_back(patch_token(p.tl));
      parts.push_back(patch_token(p.br));
    }
    if (span.image_index >= 0) parts.push_back(img_close(span.image_index));
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (k) out += ' ';
      out += parts[k];
    }
  }
  return out;
}

std::vector<NormBox> extract_boxes(const TokenStream& stream, int grid) {
  std::vector<NormBox> boxes;
  for (const Segment& seg : stream.segments) {
    if (const auto* span = std::get_if<GroundedSpan>(&seg)) {
      for (const PatchIndexPair& p : span->boxes) {
        boxes.push_back(decode_pair(p, grid));
      }
    }
  }
  return boxes;
}

std::set<std::string> grounding_tokens_in(std::string_view text) {
  std::set<std::string> tokens;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '<') continue;
    if (IntTag t = match_patch_token(text, i); t.ok) {
      tokens.insert(patch_token(t.value));
      i = t.end - 1;
    } else if (IntTag g = match_img_open(text, i); g.ok) {
      tokens.insert(img_open(g.value));
      i = g.end - 1;
    }
  }
  return tokens;
}

std::string strip_special_tokens(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '<') {
      std::size_t end = 0;
      if (starts_with(text, i, kPhraseOpen)) {
        end = i + kPhraseOpen.size();
      } else if (starts_with(text, i, kPhraseClose)) {
        end = i + kPhraseClose.size();
      } else if (starts_with(text, i, kGroundingToken)) {
        end = i + kGroundingToken.size();
      } else if (starts_with(text, i, kImagePlaceholder)) {
        end = i + kImagePlaceholder.size();
      } else if (IntTag t = match_patch_token(text, i); t.ok) {
        end = t.end;
      } else if (IntTag o = match_img_open(text, i); o.ok) {
        end = o.end;
      } else if (IntTag c = match_img_close(text, i); c.ok) {
        end = c.end;
      }
      if (end) {
        out += ' ';
        i = end;
        continue;
      }
    }
    out += text[i];
    ++i;
  }
  return out;
}

}  // namespace relforge
