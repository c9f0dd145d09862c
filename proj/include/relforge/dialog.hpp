#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "relforge/orchestrator.hpp"
#include "relforge/relation.hpp"

namespace relforge {

struct Turn {
  std::string role;  // "human" or "assistant"
  std::string text;  // stored without the "### Human:" / "### Assistant:" prefix

  bool operator==(const Turn&) const = default;
};

// One training sample. The first human turn declares every image as
// "<imgN> <ImageHere> </imgN>" in index order and, when the answer carries
// grounded spans, ends with "<grounding>".
struct DialogSample {
  std::string id;
  std::vector<std::string> images;
  std::vector<Turn> turns;
  Family family = Family::contrast;
  std::string task_type;
  std::string relation_id;
  bool grounding = false;
  std::string generator;
  std::optional<double> clip_score;
  std::optional<double> bbox_confidence;

  bool operator==(const DialogSample&) const = default;
};

// Builds the canonical sample: image declarations prepended to the question,
// grounding flag derived from the answer, ids wired through. Throws
// ImageIndexOutOfRange when a span or marker references an undeclared image.
DialogSample assemble_sample(const RelationPair& pair,
                             const std::vector<std::string>& images,
                             const RelationDescription& desc, const DialogTurns& turns,
                             const std::string& task_type, Family family);

struct FilterThresholds {
  double clip_score = 0.34;
  double bbox_confidence = 0.88;
  int min_words = 40;
};

struct FilterDecision {
  bool keep = true;
  std::vector<std::string> reasons;  // failed criteria, empty iff keep
};

// Strict thresholds; score criteria apply only when the score is present. Word
// count covers assistant turns only, special tokens excluded.
FilterDecision filter_quality(const DialogSample& sample,
                              const FilterThresholds& thresholds = {});

// Whitespace-delimited tokens of all assistant turns after special-token
// removal.
int assistant_word_count(const DialogSample& sample);

// "### Human: ...\n### Assistant: ..." transcript of the stored turns.
std::string render_dialog(const DialogSample& sample);

// Structural checks over a finished corpus: grammar-clean turns, declared image
// indices, canonical first-turn declaration. Returns one message per defect.
std::vector<std::string> lint_corpus(const std::vector<DialogSample>& samples);

// Line-delimited corpus, schema v1, atomic write, strict read.
// Fields exactly: id, images, turns, family, task_type, relation_id, grounding,
// generator, scores?, schema.
void write_corpus(const std::vector<DialogSample>& samples,
                  const std::filesystem::path& path);
std::vector<DialogSample> read_corpus(const std::filesystem::path& path);

std::string sample_to_line(const DialogSample& sample);
DialogSample sample_from_line(const std::string& line, const std::string& path,
                              long lineno);

}  // namespace relforge
