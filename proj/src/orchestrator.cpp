#include "relforge/orchestrator.hpp"

#include <algorithm>

#include "relforge/errors.hpp"
#include "relforge/grounding.hpp"

namespace relforge {

namespace {

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

// One comma-separated phrase of a linguistic encoding. Box phrases keep their
// patch pairs so they can be re-grounded to an image index.
struct EncPhrase {
  std::string text;   // attribute phrase, or the box label for box phrases
  bool is_box = false;
  std::vector<PatchIndexPair> pairs;
};

std::vector<EncPhrase> split_encoding(const std::string& encoding, int grid) {
  std::string body = trim(encoding);
  if (!body.empty() && body.back() == '.') body.pop_back();
  std::vector<EncPhrase> phrases;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    auto next = body.find(", ", pos);
    std::string part = trim(next == std::string::npos ? body.substr(pos)
                                                      : body.substr(pos, next - pos));
    pos = next == std::string::npos ? body.size() + 1 : next + 2;
    if (part.empty()) continue;
    EncPhrase phrase;
    phrase.text = part;
    auto marker = part.find(" bbox on ");
    if (marker != std::string::npos) {
      auto parsed = parse_grounded(part.substr(marker + 9), grid);
      if (parsed.ok()) {
        for (const Segment& seg : parsed.stream.segments)
          if (const auto* span = std::get_if<GroundedSpan>(&seg))
            phrase.pairs.insert(phrase.pairs.end(), span->boxes.begin(),
                                span->boxes.end());
      }
      if (!phrase.pairs.empty()) {
        phrase.is_box = true;
        phrase.text = trim(part.substr(0, marker));
      }
    }
    phrases.push_back(std::move(phrase));
  }
  return phrases;
}

std::vector<std::string> attribute_list(const std::vector<EncPhrase>& phrases) {
  std::vector<std::string> out;
  for (const auto& p : phrases)
    if (!p.is_box) out.push_back(p.text);
  return out;
}

bool contains(const std::vector<std::string>& list, const std::string& item) {
  return std::find(list.begin(), list.end(), item) != list.end();
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += i + 1 == items.size() ? " and " : ", ";
    out += items[i];
  }
  return out;
}

std::string grounded_box_text(const std::string& label, int image_index,
                              const std::vector<PatchIndexPair>& pairs) {
  TokenStream stream;
  stream.segments.emplace_back(GroundedSpan{label, image_index, pairs});
  return render_grounded(stream);
}

// Appends "Additionally, the <phrase> L </phrase> <imgN> ... </imgN> is visible
// in the {first|second} image." per box phrase of one side.
void append_box_sentences(std::string& text, const std::vector<EncPhrase>& phrases,
                          int image_index) {
  const char* which = image_index == 0 ? "first" : "second";
  for (const auto& p : phrases) {
    if (!p.is_box) continue;
    text += " Additionally, the " + grounded_box_text(p.text, image_index, p.pairs) +
            " is visible in the " + which + " image.";
  }
}

std::string describe_contrast(const std::vector<std::string>& common,
                              const std::vector<std::string>& only_a,
                              const std::vector<std::string>& only_b, bool truth) {
  std::string text = truth ? "The two images appear to show the same person."
                           : "The two images appear to show two different people.";
  if (!common.empty())
    text += " Both persons share the following attributes: " + join(common) + ".";
  if (only_a.empty() && only_b.empty()) {
    text += " There are no notable differences between them.";
    return text;
  }
  text += " The main difference between them is that";
  if (!only_a.empty()) text += " the first person has " + join(only_a);
  if (!only_a.empty() && !only_b.empty()) text += ", while";
  if (!only_b.empty()) text += " the second person has " + join(only_b);
  text += ".";
  return text;
}

std::string describe_similarity(const std::vector<std::string>& common,
                                const std::vector<std::string>& only_a,
                                const std::vector<std::string>& only_b) {
  std::string text;
  if (common.empty()) {
    text = "The two images share no annotated elements.";
  } else {
    text = "The two images share the following common elements: " + join(common) + ".";
  }
  if (!only_a.empty() || !only_b.empty()) {
    text += " In addition,";
    if (!only_a.empty()) text += " the first image shows " + join(only_a);
    if (!only_a.empty() && !only_b.empty()) text += ", while";
    if (!only_b.empty()) text += " the second image shows " + join(only_b);
    text += ".";
  }
  return text;
}

struct QaReply {
  std::string question;
  std::string answer;
  bool ok = false;
};

// Expects "Q: ..." on one line and "A: ..." starting a later line; the answer
// runs to the end of the reply.
QaReply split_qa(const std::string& reply) {
  QaReply out;
  std::size_t pos = 0;
  std::size_t a_start = std::string::npos;
  while (pos < reply.size()) {
    auto eol = reply.find('\n', pos);
    std::string line = reply.substr(pos, eol == std::string::npos ? std::string::npos
                                                                  : eol - pos);
    std::string trimmed = trim(line);
    if (out.question.empty() && trimmed.rfind("Q:", 0) == 0)
      out.question = trim(trimmed.substr(2));
    else if (!out.question.empty() && trimmed.rfind("A:", 0) == 0) {
      auto a_pos = reply.find("A:", pos);
      a_start = a_pos + 2;
      break;
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  if (out.question.empty() || a_start == std::string::npos) return out;
  out.answer = trim(reply.substr(a_start));
  out.ok = !out.answer.empty();
  return out;
}

}  // namespace

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::EmptyOutput: return "EmptyOutput";
    case ViolationKind::GrammarViolation: return "GrammarViolation";
    case ViolationKind::MissingToken: return "MissingToken";
    case ViolationKind::MissingDescription: return "MissingDescription";
    case ViolationKind::BadFormat: return "BadFormat";
  }
  return "EmptyOutput";
}

std::vector<Violation> validate_generation(const std::set<std::string>& required_tokens,
                                           const std::string& text, int grid) {
  std::vector<Violation> violations;
  if (trim(text).empty()) {
    violations.push_back({ViolationKind::EmptyOutput, "output is empty"});
    return violations;
  }
  auto parsed = parse_grounded(text, grid);
  for (const DecodeFailure& failure : parsed.failures)
    violations.push_back({ViolationKind::GrammarViolation,
                          std::string(to_string(failure.kind)) + " at byte " +
                              std::to_string(failure.position)});
  for (const std::string& token : required_tokens)
    if (text.find(token) == std::string::npos)
      violations.push_back({ViolationKind::MissingToken, token});
  return violations;
}

std::set<std::string> required_tokens_for(const std::string& enc_a,
                                          const std::string& enc_b) {
  std::set<std::string> tokens = grounding_tokens_in(enc_a);
  tokens.merge(grounding_tokens_in(enc_b));
  return tokens;
}

std::string fallback_describe(const std::string& enc_a, const std::string& enc_b,
                              const RelationSpec& spec, bool truth, int grid) {
  if (spec.family == Family::temporal || spec.family == Family::geometric) {
    std::string a = trim(enc_a), b = trim(enc_b);
    if (a.empty()) return b;
    if (b.empty()) return a;
    return a + " " + b;
  }
  auto phrases_a = split_encoding(enc_a, grid);
  auto phrases_b = split_encoding(enc_b, grid);
  auto attrs_a = attribute_list(phrases_a);
  auto attrs_b = attribute_list(phrases_b);
  std::vector<std::string> common, only_a, only_b;
  for (const auto& attr : attrs_a)
    (contains(attrs_b, attr) ? common : only_a).push_back(attr);
  for (const auto& attr : attrs_b)
    if (!contains(attrs_a, attr)) only_b.push_back(attr);

  std::string text = spec.family == Family::contrast
                         ? describe_contrast(common, only_a, only_b, truth)
                         : describe_similarity(common, only_a, only_b);
  append_box_sentences(text, phrases_a, 0);
  append_box_sentences(text, phrases_b, 1);
  return text;
}

DialogTurns fallback_dialog(const std::string& desc_text, const RelationSpec& spec,
                            bool truth) {
  DialogTurns turns;
  turns.generator = "fallback";
  switch (spec.family) {
    case Family::contrast:
      turns.question = "Are the two people in the two images the same person?";
      if (truth) {
        turns.answer = "Yes, they are the same person. " + desc_text +
                       " Therefore, based on these consistent attributes, it can be "
                       "concluded that these two people are the same person.";
      } else {
        turns.answer = "No, they are not the same person. " + desc_text +
                       " Therefore, based on these differences, it can be concluded "
                       "that these two people are not the same person.";
      }
      break;
    case Family::similarity:
      turns.question =
          "What are the common elements or objects found in both of these pictures?";
      turns.answer = desc_text;
      break;
    case Family::temporal:
      turns.question = "What is the video about?";
      turns.answer = desc_text;
      break;
    case Family::geometric:
      turns.question =
          "How has the object transformed from the first image to the second image?";
      turns.answer = desc_text;
      break;
  }
  return turns;
}

Orchestrator::Orchestrator(const TemplateStore& templates, ChatClient* client,
                           OrchestratorOptions options)
    : templates_(templates), client_(client), options_(options) {
  if (options_.retries < 1) throw ConfigError("retries must be at least 1");
}

RelationDescription Orchestrator::generate_description(const std::string& enc_a,
                                                       const std::string& enc_b,
                                                       const RelationSpec& spec,
                                                       bool truth) {
  const PromptTemplate& tpl = templates_.get(spec.family, Stage::desc);
  auto required = required_tokens_for(enc_a, enc_b);
  RelationDescription desc;
  desc.template_id = tpl.template_id;
  if (client_) {
    ChatRequest request;
    request.system_text = tpl.system_text;
    request.user_text = fill_template(
        tpl.user_text,
        {{"enc_a", enc_a}, {"enc_b", enc_b}, {"relation_name", spec.id}});
    for (int attempt = 1; attempt <= options_.retries; ++attempt) {
      desc.attempts = attempt;
      std::string text = client_->complete(request).text;
      if (validate_generation(required, text, options_.grid).empty()) {
        desc.text = std::move(text);
        desc.generator = "llm";
        return desc;
      }
    }
  }
  desc.text = fallback_describe(enc_a, enc_b, spec, truth, options_.grid);
  desc.generator = "fallback";
  return desc;
}

DialogTurns Orchestrator::generate_dialog(const RelationDescription& desc,
                                          const RelationSpec& spec, bool truth) {
  const PromptTemplate& tpl = templates_.get(spec.family, Stage::dialog);
  auto required = grounding_tokens_in(desc.text);
  if (client_) {
    ChatRequest request;
    request.system_text = tpl.system_text;
    request.user_text = fill_template(
        tpl.user_text, {{"prior_desc", desc.text}, {"relation_name", spec.id}});
    for (int attempt = 1; attempt <= options_.retries; ++attempt) {
      std::string reply = client_->complete(request).text;
      QaReply qa = split_qa(reply);
      if (!qa.ok) continue;
      if (qa.answer.find(desc.text) == std::string::npos) continue;
      if (!validate_generation(required, qa.answer, options_.grid).empty()) continue;
      DialogTurns turns;
      turns.question = qa.question;
      turns.answer = qa.answer;
      turns.generator = "llm";
      turns.template_id = tpl.template_id;
      return turns;
    }
  }
  DialogTurns turns = fallback_dialog(desc.text, spec, truth);
  turns.template_id = tpl.template_id;
  return turns;
}

}  // namespace relforge
