#include "relforge/temporal.hpp"

#include <algorithm>
#include <numeric>

#include "relforge/errors.hpp"
#include "relforge/grounding.hpp"
#include "relforge/rng.hpp"

namespace relforge {

namespace {

std::string frame_ref(const std::string& video_path, std::int64_t index) {
  return video_path + "#" + std::to_string(index);
}

bool is_identity(const std::vector<std::size_t>& perm) {
  for (std::size_t i = 0; i < perm.size(); ++i)
    if (perm[i] != i) return false;
  return true;
}

std::string caption_label(const SampleRecord& record) {
  auto it = record.labels.find("caption");
  if (it == record.labels.end()) return "";
  if (const auto* text = std::get_if<std::string>(&it->second)) return *text;
  return "";
}

}  // namespace

FrameSequence sample_frames(const SampleRecord& record, int k, std::uint64_t seed) {
  if (record.media.kind != MediaRef::Kind::video)
    throw ConfigError("sample_frames requires a video record: " + record.id);
  if (k < 2 || k > 8) throw ConfigError("frame count must be in [2, 8]");
  const auto& all = record.media.frames;
  auto n = static_cast<std::size_t>(all.size());
  if (n < static_cast<std::size_t>(k))
    throw TooFewFrames("record " + record.id + " has " + std::to_string(n) +
                       " frames, need " + std::to_string(k));
  Rng rng(seed);
  FrameSequence seq;
  seq.video = record.media.path;
  seq.caption = caption_label(record);
  // Stratum s covers positions [s*n/k, (s+1)*n/k); strata are nonempty because
  // n >= k, and picking one position per stratum keeps the output chronological.
  for (int s = 0; s < k; ++s) {
    std::size_t lo = static_cast<std::size_t>(s) * n / static_cast<std::size_t>(k);
    std::size_t hi = static_cast<std::size_t>(s + 1) * n / static_cast<std::size_t>(k);
    std::size_t pos = lo + rng.below(hi - lo);
    seq.frames.push_back(Frame{all[pos], frame_ref(seq.video, all[pos])});
  }
  return seq;
}

OrderTask make_order_task(const FrameSequence& seq, std::uint64_t seed) {
  auto k = seq.frames.size();
  if (k < 2) throw ConfigError("order task needs at least two frames");
  Rng rng(seed);
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  do {
    rng.shuffle(perm);
  } while (is_identity(perm));
  OrderTask task;
  task.video = seq.video;
  task.caption = seq.caption;
  task.ground_truth = perm;
  for (std::size_t rank : perm) task.shuffled.push_back(seq.frames[rank]);
  return task;
}

std::string permutation_string(const OrderTask& task) {
  std::string out;
  for (std::size_t i = 0; i < task.ground_truth.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(task.ground_truth[i]);
  }
  return out;
}

std::string order_answer_text(const OrderTask& task) {
  // inverse[r] = shuffled position holding chronological rank r.
  std::vector<std::size_t> inverse(task.ground_truth.size());
  for (std::size_t i = 0; i < task.ground_truth.size(); ++i)
    inverse[task.ground_truth[i]] = i;
  TokenStream stream;
  stream.segments.emplace_back(
      std::string{"The correct chronological order of the frames is "});
  for (std::size_t r = 0; r < inverse.size(); ++r) {
    if (r) stream.segments.emplace_back(std::string{", "});
    stream.segments.emplace_back(ImageMarker{static_cast<int>(inverse[r]), false});
  }
  stream.segments.emplace_back(std::string{"."});
  return render_grounded(stream);
}

std::string describe_sequence(const FrameSequence& seq) {
  if (seq.caption.empty()) throw EmptyCaption("sequence has no caption");
  TokenStream stream;
  stream.segments.emplace_back(std::string{"The frames "});
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    if (i) stream.segments.emplace_back(std::string{", "});
    stream.segments.emplace_back(ImageMarker{static_cast<int>(i), false});
  }
  stream.segments.emplace_back(" in chronological order show " + seq.caption + ".");
  return render_grounded(stream);
}

}  // namespace relforge
