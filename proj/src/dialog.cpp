#include "relforge/dialog.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "relforge/errors.hpp"
#include "relforge/grounding.hpp"

namespace relforge {

namespace {

// Highest image index referenced by spans or markers; -1 when none.
int max_image_index(const std::string& text) {
  auto parsed = parse_grounded(text);
  int max_index = -1;
  for (const Segment& seg : parsed.stream.segments) {
    if (const auto* span = std::get_if<GroundedSpan>(&seg))
      max_index = std::max(max_index, span->image_index);
    else if (const auto* marker = std::get_if<ImageMarker>(&seg))
      max_index = std::max(max_index, marker->image_index);
  }
  return max_index;
}

bool has_grounded_span(const std::string& text) {
  auto parsed = parse_grounded(text);
  for (const Segment& seg : parsed.stream.segments)
    if (std::holds_alternative<GroundedSpan>(seg)) return true;
  return false;
}

std::string image_declarations(std::size_t count) {
  TokenStream stream;
  for (std::size_t i = 0; i < count; ++i) {
    if (i) stream.segments.emplace_back(std::string{", "});
    stream.segments.emplace_back(ImageMarker{static_cast<int>(i), true});
  }
  return render_grounded(stream);
}

void write_atomic(const std::filesystem::path& path, const std::string& payload) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out << payload;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

}  // namespace

DialogSample assemble_sample(const RelationPair& pair,
                             const std::vector<std::string>& images,
                             const RelationDescription& desc, const DialogTurns& turns,
                             const std::string& task_type, Family family) {
  DialogSample sample;
  sample.relation_id = pair.relation_id;
  sample.task_type = task_type;
  sample.family = family;
  sample.generator = turns.generator.empty() ? desc.generator : turns.generator;
  sample.images = images;
  sample.id = pair.relation_id;
  for (const std::string& record_id : pair.record_ids) sample.id += "_" + record_id;

  int referenced = std::max(max_image_index(turns.question),
                            std::max(max_image_index(turns.answer),
                                     max_image_index(desc.text)));
  if (referenced >= static_cast<int>(images.size()))
    throw ImageIndexOutOfRange("answer references img" + std::to_string(referenced) +
                               " but only " + std::to_string(images.size()) +
                               " images are declared");

  sample.grounding = has_grounded_span(turns.answer);
  std::string human = image_declarations(images.size());
  if (!human.empty()) human += " ";
  human += turns.question;
  if (sample.grounding) human += " " + std::string(kGroundingToken);
  sample.turns.push_back(Turn{"human", human});
  sample.turns.push_back(Turn{"assistant", turns.answer});
  return sample;
}

int assistant_word_count(const DialogSample& sample) {
  int count = 0;
  for (const Turn& turn : sample.turns) {
    if (turn.role != "assistant") continue;
    std::istringstream words(strip_special_tokens(turn.text));
    std::string word;
    while (words >> word) ++count;
  }
  return count;
}

FilterDecision filter_quality(const DialogSample& sample,
                              const FilterThresholds& thresholds) {
  FilterDecision decision;
  if (sample.clip_score && !(*sample.clip_score > thresholds.clip_score))
    decision.reasons.push_back("clip_score");
  if (sample.bbox_confidence && !(*sample.bbox_confidence > thresholds.bbox_confidence))
    decision.reasons.push_back("bbox_confidence");
  if (!(assistant_word_count(sample) > thresholds.min_words))
    decision.reasons.push_back("length");
  decision.keep = decision.reasons.empty();
  return decision;
}

std::string render_dialog(const DialogSample& sample) {
  std::string out;
  for (const Turn& turn : sample.turns) {
    if (!out.empty()) out += "\n";
    out += turn.role == "human" ? kHumanPrefix : kAssistantPrefix;
    out += " " + turn.text;
  }
  return out;
}

std::vector<std::string> lint_corpus(const std::vector<DialogSample>& samples) {
  std::vector<std::string> issues;
  for (const DialogSample& sample : samples) {
    if (sample.turns.empty() || sample.turns.front().role != "human") {
      issues.push_back(sample.id + ": first turn must be human");
      continue;
    }
    for (const Turn& turn : sample.turns) {
      auto parsed = parse_grounded(turn.text);
      for (const DecodeFailure& failure : parsed.failures)
        issues.push_back(sample.id + ": " + turn.role + " turn has " +
                         to_string(failure.kind) + " at byte " +
                         std::to_string(failure.position));
      int referenced = max_image_index(turn.text);
      if (referenced >= static_cast<int>(sample.images.size()))
        issues.push_back(sample.id + ": references img" + std::to_string(referenced) +
                         " beyond declared images");
    }
    const std::string& first = sample.turns.front().text;
    std::string declarations = image_declarations(sample.images.size());
    if (!declarations.empty() && first.rfind(declarations, 0) != 0)
      issues.push_back(sample.id + ": first human turn must declare images in order");
    bool answer_grounded = false;
    for (const Turn& turn : sample.turns)
      if (turn.role == "assistant" && has_grounded_span(turn.text))
        answer_grounded = true;
    bool tagged = first.size() >= kGroundingToken.size() &&
                  first.compare(first.size() - kGroundingToken.size(),
                                kGroundingToken.size(), kGroundingToken) == 0;
    if (sample.grounding != tagged)
      issues.push_back(sample.id + ": grounding flag disagrees with <grounding> tag");
    if (sample.grounding != answer_grounded)
      issues.push_back(sample.id + ": grounding flag disagrees with answer spans");
  }
  return issues;
}

std::string sample_to_line(const DialogSample& sample) {
  nlohmann::ordered_json j;
  j["id"] = sample.id;
  j["images"] = sample.images;
  j["turns"] = nlohmann::ordered_json::array();
  for (const Turn& turn : sample.turns)
    j["turns"].push_back({{"role", turn.role}, {"text", turn.text}});
  j["family"] = to_string(sample.family);
  j["task_type"] = sample.task_type;
  j["relation_id"] = sample.relation_id;
  j["grounding"] = sample.grounding;
  j["generator"] = sample.generator;
  if (sample.clip_score || sample.bbox_confidence) {
    nlohmann::ordered_json scores;
    if (sample.clip_score) scores["clip_score"] = *sample.clip_score;
    if (sample.bbox_confidence) scores["bbox_confidence"] = *sample.bbox_confidence;
    j["scores"] = scores;
  }
  j["schema"] = "v1";
  return j.dump();
}

DialogSample sample_from_line(const std::string& line, const std::string& path,
                              long lineno) {
  const std::string where = path + ":" + std::to_string(lineno);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(where, "", std::string("bad JSON: ") + e.what());
  }
  static const char* known[] = {"id",          "images",    "turns",
                                "family",      "task_type", "relation_id",
                                "grounding",   "generator", "scores",
                                "schema"};
  for (auto& [key, value] : j.items()) {
    (void)value;
    bool found = false;
    for (const char* k : known) found = found || key == k;
    if (!found) throw SchemaError(where, key, "unknown field");
  }
  try {
    if (j.at("schema").get<std::string>() != "v1")
      throw SchemaError(where, "schema", "unsupported schema version");
    DialogSample sample;
    sample.id = j.at("id").get<std::string>();
    sample.images = j.at("images").get<std::vector<std::string>>();
    for (const auto& turn : j.at("turns")) {
      for (auto& [key, value] : turn.items()) {
        (void)value;
        if (key != "role" && key != "text")
          throw SchemaError(where, key, "unknown turn field");
      }
      std::string role = turn.at("role").get<std::string>();
      if (role != "human" && role != "assistant")
        throw SchemaError(where, "role", "role must be human or assistant");
      sample.turns.push_back(Turn{role, turn.at("text").get<std::string>()});
    }
    sample.family = family_from_string(j.at("family").get<std::string>());
    sample.task_type = j.at("task_type").get<std::string>();
    sample.relation_id = j.at("relation_id").get<std::string>();
    sample.grounding = j.at("grounding").get<bool>();
    sample.generator = j.at("generator").get<std::string>();
    if (j.contains("scores")) {
      const auto& scores = j.at("scores");
      for (auto& [key, value] : scores.items()) {
        (void)value;
        if (key != "clip_score" && key != "bbox_confidence")
          throw SchemaError(where, key, "unknown score field");
      }
      if (scores.contains("clip_score"))
        sample.clip_score = scores.at("clip_score").get<double>();
      if (scores.contains("bbox_confidence"))
        sample.bbox_confidence = scores.at("bbox_confidence").get<double>();
    }
    return sample;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(where, "sample", e.what());
  }
}

void write_corpus(const std::vector<DialogSample>& samples,
                  const std::filesystem::path& path) {
  std::string payload;
  for (const DialogSample& sample : samples) {
    payload += sample_to_line(sample);
    payload += "\n";
  }
  write_atomic(path, payload);
}

std::vector<DialogSample> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus: " + path.string());
  std::vector<DialogSample> samples;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    samples.push_back(sample_from_line(line, path.string(), lineno));
  }
  return samples;
}

}  // namespace relforge
