#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "relforge/box.hpp"
#include "relforge/dialog.hpp"
#include "relforge/llm_client.hpp"

namespace relforge {

struct EvalConfig {
  double iou_threshold = 0.5;
  int grid = 32;
  // Fixed per-task evaluation questions; fixed wording keeps runs comparable.
  std::string contrast_question = "Is the same person in these two images? And why?";
  std::string temporal_question = "What is the video about?";
  std::string fewshot_question = "Does the component appear normal?";
  int judge_lo = 0;  // clamp range for judge scores
  int judge_hi = 5;
};

// Intersection area / union area; 0 for disjoint boxes.
double iou(const NormBox& a, const NormBox& b);

struct GroundingScore {
  std::vector<bool> correct;          // per ground-truth box
  std::size_t correct_count = 0;
  std::size_t parsed_predictions = 0;
  std::size_t decode_failures = 0;    // failed slots, always scored incorrect
};

// Extracts predicted boxes from the text, matches them to ground truth greedily
// by IoU (highest first, ties to the lowest gt then pred index), and marks a gt
// box correct when its match exceeds the threshold. Parse failures consume one
// prediction slot each and never match.
GroundingScore score_grounding(const std::string& prediction_text,
                               const std::vector<NormBox>& gt, const EvalConfig& cfg);

enum class BinaryAnswer { yes, no, unparseable };

const char* to_string(BinaryAnswer answer);

// Lexicon match over the first two sentences; negations beat affirmations.
BinaryAnswer extract_binary_answer(const std::string& text);

struct Metrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

// Standard definitions; zero denominators yield 0. Throws EmptyEval when all
// counts are zero.
Metrics classification_metrics(std::size_t tp, std::size_t fp, std::size_t tn,
                               std::size_t fn);

struct JudgeResult {
  int score = 0;
  bool parsed = false;
};

// Sends the scoring rubric to the judge and parses the first integer of the
// reply, clamped to [judge_lo, judge_hi]. Unparseable replies score judge_lo.
JudgeResult judge_relation_score(const std::string& reference,
                                 const std::string& candidate, ChatClient& judge,
                                 const EvalConfig& cfg);

// Parses the first integer out of free-form judge text.
JudgeResult parse_judge_reply(const std::string& reply, const EvalConfig& cfg);

struct FewShotItem {
  std::string image;
  bool positive = false;
  std::string answer;  // gold answer shown in the prompt

  bool operator==(const FewShotItem&) const = default;
};

struct FewShotPrompt {
  std::vector<FewShotItem> examples;
  std::string query_image;
  std::string question;
  std::string text;  // rendered transcript ending with the open query turn
  std::size_t shortfall = 0;  // examples missing from the underrepresented class
};

// k in {2,4,8}; draws k/2 per class (backfilling when one class runs short),
// deterministic per seed. Throws PoolTooSmall / ConfigError.
FewShotPrompt assemble_fewshot_prompt(const std::vector<FewShotItem>& pool, int k,
                                      const std::string& query_image,
                                      const std::string& question, std::uint64_t seed);

struct EvalCounts {
  std::size_t total = 0;
  std::size_t decode_failures = 0;
  std::size_t unparseable_answers = 0;
  std::size_t missing_predictions = 0;
  std::size_t judged = 0;
  std::size_t judge_unparseable = 0;
  std::size_t gt_boxes = 0;
  std::size_t correct_boxes = 0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct EvalReport {
  double bbox_acc = 0;
  Metrics metrics;
  double relation_score_mean = 0;
  EvalCounts counts;
  std::vector<std::string> diagnostics;
};

// Predictions file: one {id, answer_text} object per line. Throws on duplicate
// ids and unknown fields.
std::map<std::string, std::string> load_predictions(const std::filesystem::path& path);

// Scores predictions against a gold corpus: grounding over every grounded gold
// sample, yes/no classification over contrast samples, judge scores when a
// judge is supplied. A missing prediction is scored as an empty answer. Throws
// EmptyEval when nothing was evaluated.
EvalReport run_eval(const std::vector<DialogSample>& gold,
                    const std::map<std::string, std::string>& predictions,
                    const EvalConfig& cfg, ChatClient* judge = nullptr);

// One-line JSON rendering of the report for machine consumption.
std::string report_to_json(const EvalReport& report);

}  // namespace relforge
