#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relforge/box.hpp"
#include "relforge/image.hpp"

namespace relforge {

enum class TransformKind { hflip, vflip, brightness, rotate, scale, translate };

const char* to_string(TransformKind kind);
TransformKind transform_kind_from_string(const std::string& name);

// Parameters for the kind: angle_deg (rotate), factor (scale/brightness),
// dx/dy (translate). Unused members keep their identities.
struct TransformParams {
  double angle_deg = 0.0;
  double factor = 1.0;
  double dx = 0.0;
  double dy = 0.0;

  bool operator==(const TransformParams&) const = default;
};

struct TransformSpec {
  TransformKind kind = TransformKind::hflip;
  TransformParams params;
  NormBox pre_box;
  NormBox post_box;
};

// Box under the transform: flips mirror across the image axes, rotate takes the
// axis-aligned hull of the corners rotated about the box center, scale grows
// about the center, translate shifts, brightness is the identity. The result is
// clamped to the unit frame; if clamping removes more than 20% of the area the
// transform throws OutOfFrame.
NormBox transform_box(const NormBox& box, TransformKind kind,
                      const TransformParams& params);

// Sampling ranges for synthesis draws.
struct SynthRanges {
  double rotate_min_deg = 10.0;
  double rotate_max_deg = 45.0;
  // Exact right-angle pool drawn half the time for rotations.
  std::vector<double> rotate_exact{90.0, 180.0, 270.0};
  double scale_shrink_lo = 0.5, scale_shrink_hi = 0.8;
  double scale_grow_lo = 1.25, scale_grow_hi = 2.0;
  double translate_min = 0.15, translate_max = 0.4;
  double bright_dim_lo = 0.4, bright_dim_hi = 0.7;
  double bright_up_lo = 1.3, bright_up_hi = 1.8;
};

// Uniform kind, parameters uniform within the configured ranges. Pure function
// of the seed.
std::pair<TransformKind, TransformParams> sample_transform(
    std::uint64_t seed, const SynthRanges& ranges = SynthRanges{});

// Cut the masked object out (border-replicate fill), transform it, composite at
// the new location. Returns the edited image and the post-transform box. The
// returned box contains every transformed mask pixel that stayed in frame.
// Throws EmptyMask / OutOfFrame.
std::pair<Image, NormBox> apply_transform(const Image& image, const Image& mask,
                                          TransformKind kind,
                                          const TransformParams& params);

// Tight box around the nonzero mask pixels, in normalized coordinates. Throws
// EmptyMask.
NormBox mask_tight_box(const Image& mask);

// One-sentence grounded description: pre box on img0, post box on img1, wording
// naming the transform.
std::string describe_transform(const TransformSpec& spec,
                               const std::string& object_label, int grid = 32);

struct SynthPair {
  std::string id;
  std::string base_ref;
  std::string synth_ref;
  std::string label;
  TransformSpec spec;
  std::string description;
};

struct SynthOutput {
  SynthPair pair;
  Image image;
};

// Sample a transform and apply it, resampling (up to eight times) when the draw
// lands out of frame. Pure function of (inputs, seed); nullopt when every
// attempt failed.
std::optional<SynthOutput> synthesize_pair(const Image& image, const Image& mask,
                                           const std::string& object_label,
                                           std::uint64_t seed,
                                           const SynthRanges& ranges = SynthRanges{},
                                           int grid = 32);

// Record-store style serialization of synth pairs (JSONL, schema v1).
std::string synth_pair_to_line(const SynthPair& pair);
SynthPair synth_pair_from_line(const std::string& line, const std::string& path,
                               long lineno);

}  // namespace relforge
