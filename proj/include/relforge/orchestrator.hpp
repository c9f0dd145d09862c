#pragma once

#include <set>
#include <string>
#include <vector>

#include "relforge/llm_client.hpp"
#include "relforge/relation.hpp"
#include "relforge/ruleset.hpp"
#include "relforge/templates.hpp"

namespace relforge {

enum class ViolationKind {
  EmptyOutput,
  GrammarViolation,
  MissingToken,
  MissingDescription,  // dialog answer does not embed the description verbatim
  BadFormat,           // dialog reply lacks the Q:/A: structure
};

const char* to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind = ViolationKind::EmptyOutput;
  std::string detail;
};

// Checks text against the generation contract: non-empty, grammatically sound
// grounding (via parse_grounded), and every required token present verbatim.
std::vector<Violation> validate_generation(const std::set<std::string>& required_tokens,
                                           const std::string& text, int grid = 32);

// Union of the grounding tokens of both encodings; the must-preserve set.
std::set<std::string> required_tokens_for(const std::string& enc_a,
                                          const std::string& enc_b);

// Validated relation description. generator records whether the text came from
// the LLM or the deterministic fallback.
struct RelationDescription {
  std::string text;
  std::string template_id;
  std::string generator;  // "llm" or "fallback"
  int attempts = 0;       // LLM attempts consumed (0 in offline mode)
};

struct DialogTurns {
  std::string question;
  std::string answer;
  std::string generator;
  std::string template_id;
};

// Deterministic rule-based generation: common attributes, differences, and
// every box re-grounded to its image index (a -> img0, b -> img1).
std::string fallback_describe(const std::string& enc_a, const std::string& enc_b,
                              const RelationSpec& spec, bool truth, int grid = 32);

// Family question plus an answer embedding the description verbatim.
DialogTurns fallback_dialog(const std::string& desc_text, const RelationSpec& spec,
                            bool truth);

struct OrchestratorOptions {
  int retries = 3;  // validation retries before falling back
  int grid = 32;
};

// Drives description -> dialogue generation. With a null client every result
// comes from the fallback generator and the whole stage is a pure function of
// its inputs.
class Orchestrator {
 public:
  Orchestrator(const TemplateStore& templates, ChatClient* client,
               OrchestratorOptions options = {});

  RelationDescription generate_description(const std::string& enc_a,
                                           const std::string& enc_b,
                                           const RelationSpec& spec, bool truth);

  DialogTurns generate_dialog(const RelationDescription& desc,
                              const RelationSpec& spec, bool truth);

 private:
  const TemplateStore& templates_;
  ChatClient* client_;  // not owned; null = offline
  OrchestratorOptions options_;
};

}  // namespace relforge
