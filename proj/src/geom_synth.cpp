#include "relforge/geom_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "json.hpp"
#include "relforge/errors.hpp"
#include "relforge/grounding.hpp"
#include "relforge/rng.hpp"

namespace relforge {

namespace {

// Exact values at right angles so 90-degree multiples round-trip bitwise.
void cos_sin(double angle_deg, double& c, double& s) {
  double norm = std::fmod(angle_deg, 360.0);
  if (norm < 0) norm += 360.0;
  if (norm == 0.0) {
    c = 1.0; s = 0.0;
  } else if (norm == 90.0) {
    c = 0.0; s = 1.0;
  } else if (norm == 180.0) {
    c = -1.0; s = 0.0;
  } else if (norm == 270.0) {
    c = 0.0; s = -1.0;
  } else {
    double rad = angle_deg * (std::acos(-1.0) / 180.0);
    c = std::cos(rad);
    s = std::sin(rad);
  }
}

void rotate_point(double cx, double cy, double c, double s, double& x, double& y) {
  double dx = x - cx, dy = y - cy;
  x = cx + dx * c - dy * s;
  y = cy + dx * s + dy * c;
}

NormBox clamp_or_throw(double x1, double y1, double x2, double y2) {
  if (!(x1 < x2) || !(y1 < y2)) throw OutOfFrame("degenerate transformed box");
  double raw_area = (x2 - x1) * (y2 - y1);
  double cx1 = std::max(0.0, x1), cy1 = std::max(0.0, y1);
  double cx2 = std::min(1.0, x2), cy2 = std::min(1.0, y2);
  if (!(cx1 < cx2) || !(cy1 < cy2)) throw OutOfFrame("transformed box left the frame");
  double kept = (cx2 - cx1) * (cy2 - cy1);
  if (kept < 0.8 * raw_area) throw OutOfFrame("transformed box mostly out of frame");
  return NormBox{cx1, cy1, cx2, cy2};
}

bool masked(const Image& mask, int x, int y) { return mask.at(x, y, 0) != 0; }

// Row pass fills masked pixels from the nearest unmasked pixel in the row (ties
// go left); the column pass covers rows that were fully masked.
Image inpaint(const Image& image, const Image& mask) {
  Image out = image;
  int w = image.width, h = image.height, ch = image.channels;
  std::vector<char> filled(static_cast<std::size_t>(w) * h, 0);
  auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };
  for (int y = 0; y < h; ++y) {
    std::vector<int> nearest(w, -1);
    int last = -1;
    for (int x = 0; x < w; ++x) {
      if (!masked(mask, x, y)) last = x;
      nearest[x] = last;
    }
    last = -1;
    for (int x = w - 1; x >= 0; --x) {
      if (!masked(mask, x, y)) last = x;
      if (nearest[x] < 0 || (last >= 0 && last - x < x - nearest[x])) nearest[x] = last;
    }
    for (int x = 0; x < w; ++x) {
      if (!masked(mask, x, y)) {
        filled[idx(x, y)] = 1;
        continue;
      }
      if (nearest[x] < 0) continue;
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = image.at(nearest[x], y, c);
      filled[idx(x, y)] = 1;
    }
  }
  for (int x = 0; x < w; ++x) {
    std::vector<int> nearest(h, -1);
    int last = -1;
    for (int y = 0; y < h; ++y) {
      if (filled[idx(x, y)]) last = y;
      nearest[y] = last;
    }
    last = -1;
    for (int y = h - 1; y >= 0; --y) {
      if (filled[idx(x, y)]) last = y;
      if (nearest[y] < 0 || (last >= 0 && last - y < y - nearest[y])) nearest[y] = last;
    }
    for (int y = 0; y < h; ++y) {
      if (filled[idx(x, y)] || nearest[y] < 0) continue;
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = out.at(x, nearest[y], c);
    }
  }
  return out;
}

// Destination pixel center -> source position, inverse of the forward map.
void inverse_map(TransformKind kind, const TransformParams& p, double cx, double cy,
                 double ox, double oy, double& sx, double& sy) {
  switch (kind) {
    case TransformKind::hflip: sx = 1.0 - cx; sy = cy; return;
    case TransformKind::vflip: sx = cx; sy = 1.0 - cy; return;
    case TransformKind::translate: sx = cx - p.dx; sy = cy - p.dy; return;
    case TransformKind::scale:
      sx = (cx - ox) / p.factor + ox;
      sy = (cy - oy) / p.factor + oy;
      return;
    case TransformKind::rotate: {
      double c, s;
      cos_sin(-p.angle_deg, c, s);
      sx = cx; sy = cy;
      rotate_point(ox, oy, c, s, sx, sy);
      return;
    }
    case TransformKind::brightness: sx = cx; sy = cy; return;
  }
  sx = cx; sy = cy;
}

std::uint8_t scale_value(std::uint8_t v, double factor) {
  double scaled = std::llround(v * factor);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

std::string strip_article(const std::string& label) {
  for (const char* art : {"the ", "a ", "an ", "The ", "A ", "An "}) {
    std::string prefix = art;
    if (label.size() > prefix.size() && label.compare(0, prefix.size(), prefix) == 0)
      return label.substr(prefix.size());
  }
  return label;
}

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", value);
  return buf;
}

std::string transform_clause(const TransformSpec& spec) {
  switch (spec.kind) {
    case TransformKind::hflip:
      return "has been horizontally flipped, now at";
    case TransformKind::vflip:
      return "has been vertically flipped, now at";
    case TransformKind::brightness:
      return spec.params.factor > 1.0 ? "has been made brighter, still at"
                                      : "has been made darker, still at";
    case TransformKind::rotate:
      return "has been rotated by " + format_number(spec.params.angle_deg) +
             " degrees, now at";
    case TransformKind::scale:
      return std::string("has been scaled ") +
             (spec.params.factor > 1.0 ? "larger" : "smaller") + " by a factor of " +
             format_number(spec.params.factor) + ", now at";
    case TransformKind::translate: {
      std::string dir;
      if (spec.params.dy <= -0.075) dir = "up";
      else if (spec.params.dy >= 0.075) dir = "down";
      if (std::abs(spec.params.dx) >= 0.075) {
        if (!dir.empty()) dir += " and ";
        dir += spec.params.dx < 0 ? "left" : "right";
      }
      if (dir.empty()) dir = "slightly";
      return "has been moved " + dir + ", now at";
    }
  }
  return "has been transformed, now at";
}

nlohmann::ordered_json box_json(const NormBox& b) {
  return {{"x1", b.x1}, {"y1", b.y1}, {"x2", b.x2}, {"y2", b.y2}};
}

NormBox box_from_json(const nlohmann::json& j, const std::string& path) {
  for (auto& [key, value] : j.items()) {
    (void)value;
    if (key != "x1" && key != "y1" && key != "x2" && key != "y2")
      throw SchemaError(path, key, "unknown box field");
  }
  if (!j.contains("x1") || !j.contains("y1") || !j.contains("x2") || !j.contains("y2"))
    throw SchemaError(path, "box", "missing coordinate");
  NormBox b{j.at("x1").get<double>(), j.at("y1").get<double>(),
            j.at("x2").get<double>(), j.at("y2").get<double>()};
  if (!b.valid()) throw SchemaError(path, "box", "invalid coordinates");
  return b;
}

}  // namespace

const char* to_string(TransformKind kind) {
  switch (kind) {
    case TransformKind::hflip: return "hflip";
    case TransformKind::vflip: return "vflip";
    case TransformKind::brightness: return "brightness";
    case TransformKind::rotate: return "rotate";
    case TransformKind::scale: return "scale";
    case TransformKind::translate: return "translate";
  }
  return "hflip";
}

TransformKind transform_kind_from_string(const std::string& name) {
  if (name == "hflip") return TransformKind::hflip;
  if (name == "vflip") return TransformKind::vflip;
  if (name == "brightness") return TransformKind::brightness;
  if (name == "rotate") return TransformKind::rotate;
  if (name == "scale") return TransformKind::scale;
  if (name == "translate") return TransformKind::translate;
  throw ConfigError("unknown transform kind: " + name);
}

NormBox transform_box(const NormBox& box, TransformKind kind,
                      const TransformParams& params) {
  if (!box.valid()) throw InvalidBox("transform_box: invalid input box");
  switch (kind) {
    case TransformKind::brightness:
      return box;
    case TransformKind::hflip:
      return NormBox{1.0 - box.x2, box.y1, 1.0 - box.x1, box.y2};
    case TransformKind::vflip:
      return NormBox{box.x1, 1.0 - box.y2, box.x2, 1.0 - box.y1};
    case TransformKind::translate:
      return clamp_or_throw(box.x1 + params.dx, box.y1 + params.dy,
                            box.x2 + params.dx, box.y2 + params.dy);
    case TransformKind::scale: {
      if (!(params.factor > 0.0)) throw ConfigError("scale factor must be positive");
      double cx = (box.x1 + box.x2) / 2.0, cy = (box.y1 + box.y2) / 2.0;
      double hw = box.width() / 2.0 * params.factor;
      double hh = box.height() / 2.0 * params.factor;
      return clamp_or_throw(cx - hw, cy - hh, cx + hw, cy + hh);
    }
    case TransformKind::rotate: {
      double cx = (box.x1 + box.x2) / 2.0, cy = (box.y1 + box.y2) / 2.0;
      double c, s;
      cos_sin(params.angle_deg, c, s);
      double corners[4][2] = {{box.x1, box.y1}, {box.x2, box.y1},
                              {box.x1, box.y2}, {box.x2, box.y2}};
      double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
      double hi_x = -lo_x, hi_y = -lo_x;
      for (auto& corner : corners) {
        double x = corner[0], y = corner[1];
        rotate_point(cx, cy, c, s, x, y);
        lo_x = std::min(lo_x, x); hi_x = std::max(hi_x, x);
        lo_y = std::min(lo_y, y); hi_y = std::max(hi_y, y);
      }
      return clamp_or_throw(lo_x, lo_y, hi_x, hi_y);
    }
  }
  throw ConfigError("unknown transform kind");
}

std::pair<TransformKind, TransformParams> sample_transform(std::uint64_t seed,
                                                           const SynthRanges& r) {
  Rng rng(seed);
  auto kind = static_cast<TransformKind>(rng.below(6));
  TransformParams p;
  switch (kind) {
    case TransformKind::hflip:
    case TransformKind::vflip:
      break;
    case TransformKind::brightness:
      p.factor = rng.coin() ? rng.real_range(r.bright_dim_lo, r.bright_dim_hi)
                            : rng.real_range(r.bright_up_lo, r.bright_up_hi);
      break;
    case TransformKind::rotate:
      if (rng.coin() && !r.rotate_exact.empty()) {
        p.angle_deg = r.rotate_exact[rng.below(r.rotate_exact.size())];
      } else {
        double magnitude = rng.real_range(r.rotate_min_deg, r.rotate_max_deg);
        p.angle_deg = rng.coin() ? magnitude : -magnitude;
      }
      break;
    case TransformKind::scale:
      p.factor = rng.coin() ? rng.real_range(r.scale_shrink_lo, r.scale_shrink_hi)
                            : rng.real_range(r.scale_grow_lo, r.scale_grow_hi);
      break;
    case TransformKind::translate:
      do {
        p.dx = rng.real_range(-r.translate_max, r.translate_max);
        p.dy = rng.real_range(-r.translate_max, r.translate_max);
      } while (std::max(std::abs(p.dx), std::abs(p.dy)) < r.translate_min);
      break;
  }
  return {kind, p};
}

NormBox mask_tight_box(const Image& mask) {
  int min_x = mask.width, min_y = mask.height, max_x = -1, max_y = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (masked(mask, x, y)) {
        min_x = std::min(min_x, x); max_x = std::max(max_x, x);
        min_y = std::min(min_y, y); max_y = std::max(max_y, y);
      }
  if (max_x < 0) throw EmptyMask("mask has no set pixels");
  double w = mask.width, h = mask.height;
  return NormBox{min_x / w, min_y / h, (max_x + 1) / w, (max_y + 1) / h};
}

std::pair<Image, NormBox> apply_transform(const Image& image, const Image& mask,
                                          TransformKind kind,
                                          const TransformParams& params) {
  if (mask.width != image.width || mask.height != image.height)
    throw ConfigError("mask dimensions must match the image");
  NormBox pre = mask_tight_box(mask);
  NormBox post = transform_box(pre, kind, params);

  if (kind == TransformKind::brightness) {
    Image out = image;
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        if (masked(mask, x, y))
          for (int c = 0; c < image.channels; ++c)
            out.at(x, y, c) = scale_value(image.at(x, y, c), params.factor);
    return {std::move(out), post};
  }

  Image out = inpaint(image, mask);
  int w = image.width, h = image.height;
  double ox = (pre.x1 + pre.x2) / 2.0, oy = (pre.y1 + pre.y2) / 2.0;
  // Restricting destination pixels to the post box keeps every composited pixel
  // inside the reported ground truth.
  int x_lo = std::clamp(static_cast<int>(std::floor(post.x1 * w)), 0, w - 1);
  int y_lo = std::clamp(static_cast<int>(std::floor(post.y1 * h)), 0, h - 1);
  int x_hi = std::clamp(static_cast<int>(std::ceil(post.x2 * w)) - 1, 0, w - 1);
  int y_hi = std::clamp(static_cast<int>(std::ceil(post.y2 * h)) - 1, 0, h - 1);
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      double cx = (x + 0.5) / w, cy = (y + 0.5) / h;
      if (cx < post.x1 || cx > post.x2 || cy < post.y1 || cy > post.y2) continue;
      double sx, sy;
      inverse_map(kind, params, cx, cy, ox, oy, sx, sy);
      int sxi = static_cast<int>(std::floor(sx * w));
      int syi = static_cast<int>(std::floor(sy * h));
      if (sxi < 0 || sxi >= w || syi < 0 || syi >= h) continue;
      if (!masked(mask, sxi, syi)) continue;
      for (int c = 0; c < image.channels; ++c) out.at(x, y, c) = image.at(sxi, syi, c);
    }
  }
  return {std::move(out), post};
}

std::string describe_transform(const TransformSpec& spec,
                               const std::string& object_label, int grid) {
  TokenStream stream;
  stream.segments.emplace_back(std::string{"The "});
  stream.segments.emplace_back(
      GroundedSpan{strip_article(object_label), 0, {encode_box(spec.pre_box, grid)}});
  stream.segments.emplace_back(" " + transform_clause(spec) + " ");
  stream.segments.emplace_back(
      GroundedSpan{"", 1, {encode_box(spec.post_box, grid)}});
  stream.segments.emplace_back(std::string{"."});
  return render_grounded(stream);
}

std::optional<SynthOutput> synthesize_pair(const Image& image, const Image& mask,
                                           const std::string& object_label,
                                           std::uint64_t seed, const SynthRanges& ranges,
                                           int grid) {
  for (std::uint64_t attempt = 0; attempt < 8; ++attempt) {
    auto [kind, params] = sample_transform(mix_seed(seed, attempt), ranges);
    try {
      auto [edited, post] = apply_transform(image, mask, kind, params);
      TransformSpec spec{kind, params, mask_tight_box(mask), post};
      SynthPair pair;
      pair.label = object_label;
      pair.spec = spec;
      pair.description = describe_transform(spec, object_label, grid);
      return SynthOutput{std::move(pair), std::move(edited)};
    } catch (const OutOfFrame&) {
      continue;
    }
  }
  return std::nullopt;
}

std::string synth_pair_to_line(const SynthPair& pair) {
  nlohmann::ordered_json j;
  j["schema"] = "v1";
  j["id"] = pair.id;
  j["base"] = pair.base_ref;
  j["synth"] = pair.synth_ref;
  j["label"] = pair.label;
  j["kind"] = to_string(pair.spec.kind);
  j["params"] = {{"angle_deg", pair.spec.params.angle_deg},
                 {"factor", pair.spec.params.factor},
                 {"dx", pair.spec.params.dx},
                 {"dy", pair.spec.params.dy}};
  j["pre_box"] = box_json(pair.spec.pre_box);
  j["post_box"] = box_json(pair.spec.post_box);
  j["description"] = pair.description;
  return j.dump();
}

SynthPair synth_pair_from_line(const std::string& line, const std::string& path,
                               long lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw RowError(lineno, std::string("bad JSON: ") + e.what());
  }
  static const char* known[] = {"schema", "id",     "base",     "synth",
                                "label",  "kind",   "params",   "pre_box",
                                "post_box", "description"};
  for (auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known))
      throw SchemaError(path, key, "unknown field");
  }
  try {
    if (j.at("schema").get<std::string>() != "v1")
      throw SchemaError(path, "schema", "unsupported schema version");
    SynthPair pair;
    pair.id = j.at("id").get<std::string>();
    pair.base_ref = j.at("base").get<std::string>();
    pair.synth_ref = j.at("synth").get<std::string>();
    pair.label = j.at("label").get<std::string>();
    pair.spec.kind = transform_kind_from_string(j.at("kind").get<std::string>());
    const auto& p = j.at("params");
    pair.spec.params.angle_deg = p.at("angle_deg").get<double>();
    pair.spec.params.factor = p.at("factor").get<double>();
    pair.spec.params.dx = p.at("dx").get<double>();
    pair.spec.params.dy = p.at("dy").get<double>();
    pair.spec.pre_box = box_from_json(j.at("pre_box"), path);
    pair.spec.post_box = box_from_json(j.at("post_box"), path);
    pair.description = j.at("description").get<std::string>();
    return pair;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path, "synth_pair", e.what());
  }
}

}  // namespace relforge
