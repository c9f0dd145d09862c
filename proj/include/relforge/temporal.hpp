#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relforge/record.hpp"

namespace relforge {

struct Frame {
  std::int64_t index = 0;
  std::string image;

  bool operator==(const Frame&) const = default;
};

// Chronologically ordered frame subset of one video plus its caption.
struct FrameSequence {
  std::string video;
  std::vector<Frame> frames;
  std::string caption;
};

// Shuffled copy of a sequence: ground_truth[i] is the chronological rank of
// shuffled frame i, and the permutation is never the identity.
struct OrderTask {
  std::vector<Frame> shuffled;
  std::vector<std::size_t> ground_truth;
  std::string video;
  std::string caption;
};

// One frame per stratum of the index range, uniform within the stratum.
// Deterministic per seed. Throws TooFewFrames when the video is shorter than k
// and ConfigError for k outside [2, 8].
FrameSequence sample_frames(const SampleRecord& record, int k, std::uint64_t seed);

// Uniform non-identity permutation of the sequence, deterministic per seed.
OrderTask make_order_task(const FrameSequence& seq, std::uint64_t seed);

// "2, 0, 3, 1": chronological rank of each shuffled position.
std::string permutation_string(const OrderTask& task);

// Natural-language answer listing the shuffled frames by marker in
// chronological order.
std::string order_answer_text(const OrderTask& task);

// Frame markers in index order followed by the caption. Throws EmptyCaption.
std::string describe_sequence(const FrameSequence& seq);

}  // namespace relforge
