#pragma once

#include <map>
#include <string>
#include <vector>

#include "relforge/relation.hpp"

namespace relforge {

enum class Stage { desc, dialog };

const char* to_string(Stage stage);
Stage stage_from_string(const std::string& name);

// Versioned prompt pair for one (family, stage). user_text carries named slots
// in braces: desc templates use {enc_a} and {enc_b}, dialog templates use
// {prior_desc}; {relation_name} is available to both.
struct PromptTemplate {
  Family family = Family::similarity;
  Stage stage = Stage::desc;
  std::string template_id;
  std::string system_text;
  std::string user_text;
};

// Replaces {name} slots from the map; an unknown slot name is a ConfigError.
std::string fill_template(const std::string& text,
                          const std::map<std::string, std::string>& slots);

class TemplateStore {
 public:
  // Validates stage-required slots and rejects duplicate (family, stage) keys.
  void add(PromptTemplate tpl);
  const PromptTemplate& get(Family family, Stage stage) const;
  const std::vector<PromptTemplate>& all() const { return templates_; }

  // Compiled-in copies of the shipped template files.
  static TemplateStore builtin();
  // JSON array of {template_id, family, stage, system, user}.
  static TemplateStore load_file(const std::string& path);

 private:
  std::vector<PromptTemplate> templates_;
};

// Scoring prompt asking for a single integer 0..5 comparing a candidate
// relation description against the reference.
std::string judge_prompt(const std::string& reference, const std::string& candidate);

}  // namespace relforge
