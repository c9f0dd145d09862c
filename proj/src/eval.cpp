#include "relforge/eval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"
#include "relforge/errors.hpp"
#include "relforge/grounding.hpp"
#include "relforge/rng.hpp"
#include "relforge/templates.hpp"

namespace relforge {

namespace {

std::string lower(const std::string& text) {
  std::string out = text;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool word_boundary_at(const std::string& text, std::size_t pos, std::size_t len) {
  auto is_word = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
  };
  bool left_ok = pos == 0 || !is_word(text[pos - 1]);
  bool right_ok = pos + len >= text.size() || !is_word(text[pos + len]);
  return left_ok && right_ok;
}

bool contains_word(const std::string& haystack, const std::string& needle) {
  std::size_t pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string::npos) {
    if (word_boundary_at(haystack, pos, needle.size())) return true;
    ++pos;
  }
  return false;
}

// First n sentences, splitting on ./!/? terminators.
std::string leading_sentences(const std::string& text, int n) {
  int seen = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '.' || text[i] == '!' || text[i] == '?') {
      if (++seen == n) return text.substr(0, i + 1);
    }
  }
  return text;
}

std::string gold_answer_text(const DialogSample& sample) {
  std::string out;
  for (const Turn& turn : sample.turns)
    if (turn.role == "assistant") {
      if (!out.empty()) out += " ";
      out += turn.text;
    }
  return out;
}

std::vector<NormBox> gold_boxes(const DialogSample& sample, int grid) {
  std::vector<NormBox> boxes;
  for (const Turn& turn : sample.turns) {
    if (turn.role != "assistant") continue;
    auto parsed = parse_grounded(turn.text, grid);
    auto turn_boxes = extract_boxes(parsed.stream, grid);
    boxes.insert(boxes.end(), turn_boxes.begin(), turn_boxes.end());
  }
  return boxes;
}

}  // namespace

double iou(const NormBox& a, const NormBox& b) {
  if (!a.valid() || !b.valid()) throw InvalidBox("iou requires valid boxes");
  double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
  double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
  if (ix1 >= ix2 || iy1 >= iy2) return 0.0;
  double inter = (ix2 - ix1) * (iy2 - iy1);
  double uni = a.area() + b.area() - inter;
  return inter / uni;
}

GroundingScore score_grounding(const std::string& prediction_text,
                               const std::vector<NormBox>& gt, const EvalConfig& cfg) {
  if (gt.empty()) throw ConfigError("score_grounding requires ground-truth boxes");
  GroundingScore score;
  score.correct.assign(gt.size(), false);
  auto parsed = parse_grounded(prediction_text, cfg.grid);
  score.decode_failures = parsed.failures.size();
  std::vector<NormBox> preds = extract_boxes(parsed.stream, cfg.grid);
  score.parsed_predictions = preds.size();

  std::vector<bool> pred_used(preds.size(), false);
  std::vector<bool> gt_used(gt.size(), false);
  for (;;) {
    double best = -1.0;
    std::size_t best_gt = 0, best_pred = 0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (gt_used[g]) continue;
      for (std::size_t p = 0; p < preds.size(); ++p) {
        if (pred_used[p]) continue;
        double v = iou(preds[p], gt[g]);
        if (v > best) {
          best = v;
          best_gt = g;
          best_pred = p;
        }
      }
    }
    if (best < 0.0) break;
    gt_used[best_gt] = true;
    pred_used[best_pred] = true;
    if (best > cfg.iou_threshold) {
      score.correct[best_gt] = true;
      ++score.correct_count;
    }
  }
  return score;
}

const char* to_string(BinaryAnswer answer) {
  switch (answer) {
    case BinaryAnswer::yes: return "yes";
    case BinaryAnswer::no: return "no";
    case BinaryAnswer::unparseable: return "unparseable";
  }
  return "unparseable";
}

BinaryAnswer extract_binary_answer(const std::string& text) {
  std::string window = lower(leading_sentences(text, 2));
  if (contains_word(window, "no") || window.find("not the same") != std::string::npos ||
      contains_word(window, "different"))
    return BinaryAnswer::no;
  if (contains_word(window, "yes") ||
      window.find("the same person") != std::string::npos ||
      window.find("same person") != std::string::npos)
    return BinaryAnswer::yes;
  return BinaryAnswer::unparseable;
}

Metrics classification_metrics(std::size_t tp, std::size_t fp, std::size_t tn,
                               std::size_t fn) {
  std::size_t total = tp + fp + tn + fn;
  if (total == 0) throw EmptyEval("no classification outcomes to score");
  Metrics m;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0;
  m.f1 = m.precision + m.recall > 0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0;
  return m;
}

JudgeResult parse_judge_reply(const std::string& reply, const EvalConfig& cfg) {
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
    bool negative = i > 0 && reply[i - 1] == '-';
    long value = 0;
    while (i < reply.size() && std::isdigit(static_cast<unsigned char>(reply[i]))) {
      value = std::min(value * 10 + (reply[i] - '0'), 1000L);
      ++i;
    }
    if (negative) value = -value;
    JudgeResult result;
    result.score = static_cast<int>(
        std::clamp(value, static_cast<long>(cfg.judge_lo), static_cast<long>(cfg.judge_hi)));
    result.parsed = true;
    return result;
  }
  return JudgeResult{cfg.judge_lo, false};
}

JudgeResult judge_relation_score(const std::string& reference,
                                 const std::string& candidate, ChatClient& judge,
                                 const EvalConfig& cfg) {
  ChatRequest request;
  request.user_text = judge_prompt(reference, candidate);
  request.temperature = 0.0;
  return parse_judge_reply(judge.complete(request).text, cfg);
}

FewShotPrompt assemble_fewshot_prompt(const std::vector<FewShotItem>& pool, int k,
                                      const std::string& query_image,
                                      const std::string& question, std::uint64_t seed) {
  if (k != 2 && k != 4 && k != 8) throw ConfigError("k must be 2, 4, or 8");
  if (pool.size() < static_cast<std::size_t>(k))
    throw PoolTooSmall("pool holds " + std::to_string(pool.size()) +
                       " examples, need " + std::to_string(k));
  for (const FewShotItem& item : pool)
    if (item.image == query_image)
      throw ConfigError("query image must not appear in the example pool");

  std::vector<FewShotItem> positives, negatives;
  for (const FewShotItem& item : pool)
    (item.positive ? positives : negatives).push_back(item);

  std::size_t want_pos = static_cast<std::size_t>(k) / 2;
  std::size_t take_pos = std::min(want_pos, positives.size());
  std::size_t take_neg = std::min(static_cast<std::size_t>(k) - take_pos,
                                  negatives.size());
  // Backfill from the other class when one runs short.
  take_pos = std::min(static_cast<std::size_t>(k) - take_neg, positives.size());

  FewShotPrompt prompt;
  prompt.query_image = query_image;
  prompt.question = question;
  prompt.shortfall = want_pos - std::min(want_pos, std::min(take_pos, take_neg));

  Rng rng(seed);
  auto chosen_pos = rng.sample(positives, take_pos);
  auto chosen_neg = rng.sample(negatives, take_neg);
  prompt.examples = chosen_pos;
  prompt.examples.insert(prompt.examples.end(), chosen_neg.begin(), chosen_neg.end());
  rng.shuffle(prompt.examples);

  TokenStream transcript;
  std::string text;
  for (std::size_t i = 0; i < prompt.examples.size(); ++i) {
    TokenStream marker;
    marker.segments.emplace_back(ImageMarker{static_cast<int>(i), true});
    text += std::string(kHumanPrefix) + " " + render_grounded(marker) + " " + question +
            "\n";
    text += std::string(kAssistantPrefix) + " " + prompt.examples[i].answer + "\n";
  }
  TokenStream marker;
  marker.segments.emplace_back(ImageMarker{static_cast<int>(prompt.examples.size()), true});
  text += std::string(kHumanPrefix) + " " + render_grounded(marker) + " " + question;
  prompt.text = std::move(text);
  return prompt;
}

std::map<std::string, std::string> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions: " + path.string());
  std::map<std::string, std::string> predictions;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(where, "", std::string("bad JSON: ") + e.what());
    }
    for (auto& [key, value] : j.items()) {
      (void)value;
      if (key != "id" && key != "answer_text")
        throw SchemaError(where, key, "unknown field");
    }
    try {
      std::string id = j.at("id").get<std::string>();
      if (predictions.count(id)) throw SchemaError(where, "id", "duplicate id " + id);
      predictions[id] = j.at("answer_text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(where, "prediction", e.what());
    }
  }
  return predictions;
}

EvalReport run_eval(const std::vector<DialogSample>& gold,
                    const std::map<std::string, std::string>& predictions,
                    const EvalConfig& cfg, ChatClient* judge) {
  EvalReport report;
  long judge_total = 0;
  for (const DialogSample& sample : gold) {
    ++report.counts.total;
    std::string prediction;
    auto it = predictions.find(sample.id);
    if (it != predictions.end()) {
      prediction = it->second;
    } else {
      ++report.counts.missing_predictions;
      report.diagnostics.push_back(sample.id + ": no prediction, scored as empty");
    }

    auto gt = gold_boxes(sample, cfg.grid);
    if (!gt.empty()) {
      GroundingScore score = score_grounding(prediction, gt, cfg);
      report.counts.gt_boxes += gt.size();
      report.counts.correct_boxes += score.correct_count;
      report.counts.decode_failures += score.decode_failures;
    }

    if (sample.family == Family::contrast) {
      BinaryAnswer truth = extract_binary_answer(gold_answer_text(sample));
      if (truth == BinaryAnswer::unparseable) {
        report.diagnostics.push_back(sample.id + ": gold answer has no yes/no verdict");
      } else {
        BinaryAnswer predicted = extract_binary_answer(prediction);
        if (predicted == BinaryAnswer::unparseable) {
          ++report.counts.unparseable_answers;
          // Unparseable counts as incorrect: score it as the opposite class.
          predicted = truth == BinaryAnswer::yes ? BinaryAnswer::no : BinaryAnswer::yes;
        }
        if (truth == BinaryAnswer::yes) {
          predicted == BinaryAnswer::yes ? ++report.counts.tp : ++report.counts.fn;
        } else {
          predicted == BinaryAnswer::no ? ++report.counts.tn : ++report.counts.fp;
        }
      }
    }

    if (judge) {
      JudgeResult result =
          judge_relation_score(gold_answer_text(sample), prediction, *judge, cfg);
      ++report.counts.judged;
      if (!result.parsed) ++report.counts.judge_unparseable;
      judge_total += result.score;
    }
  }

  bool any_classified =
      report.counts.tp + report.counts.fp + report.counts.tn + report.counts.fn > 0;
  if (report.counts.gt_boxes == 0 && !any_classified && report.counts.judged == 0)
    throw EmptyEval("nothing to evaluate");
  if (report.counts.gt_boxes > 0)
    report.bbox_acc = static_cast<double>(report.counts.correct_boxes) /
                      static_cast<double>(report.counts.gt_boxes);
  if (any_classified)
    report.metrics = classification_metrics(report.counts.tp, report.counts.fp,
                                            report.counts.tn, report.counts.fn);
  if (report.counts.judged > 0)
    report.relation_score_mean =
        static_cast<double>(judge_total) / static_cast<double>(report.counts.judged);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["bbox_acc"] = report.bbox_acc;
  j["accuracy"] = report.metrics.accuracy;
  j["precision"] = report.metrics.precision;
  j["recall"] = report.metrics.recall;
  j["f1"] = report.metrics.f1;
  j["relation_score_mean"] = report.relation_score_mean;
  j["counts"] = {{"total", report.counts.total},
                 {"decode_failures", report.counts.decode_failures},
                 {"unparseable_answers", report.counts.unparseable_answers},
                 {"missing_predictions", report.counts.missing_predictions},
                 {"judged", report.counts.judged},
                 {"judge_unparseable", report.counts.judge_unparseable},
                 {"gt_boxes", report.counts.gt_boxes},
                 {"correct_boxes", report.counts.correct_boxes},
                 {"tp", report.counts.tp},
                 {"fp", report.counts.fp},
                 {"tn", report.counts.tn},
                 {"fn", report.counts.fn}};
  j["diagnostics"] = report.diagnostics;
  return j.dump();
}

}  // namespace relforge
