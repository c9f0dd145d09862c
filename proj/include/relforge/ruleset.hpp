#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "relforge/record.hpp"

namespace relforge {

// One phrase rule. Kind decides how the field's value turns into text:
//   literal  - fixed phrase emitted whenever the field is present
//   value    - template with one {} slot, filled with the scalar value
//   boolean  - one phrase per truth value; an empty phrase is omitted
//   set      - template applied to each element of a string-set, sorted
struct EncodingRule {
  enum class Kind { literal, value, boolean, set };
  Kind kind = Kind::literal;
  std::string field;
  std::string phrase;        // literal text or template
  std::string false_phrase;  // boolean only
};

// Ordered rules plus the box policy. Rule order fixes phrase order, so encodings
// are stable across runs.
struct EncodingRuleset {
  enum class BoxPolicy { suffix, omit };
  std::vector<std::pair<std::string, std::string>> fields;  // (name, type)
  std::vector<EncodingRule> rules;
  BoxPolicy box_policy = BoxPolicy::suffix;
};

// Load and validate a ruleset file. Line syntax:
//   field <name> <string|int|bool|set>
//   literal <field> "text"
//   value <field> "template with one {}"
//   bool <field> "true phrase" "false phrase"
//   set <field> "template with one {}"
//   boxes <suffix|omit>
// '#' starts a comment. Throws ConfigError / ParseError on violations (unknown
// field references, wrong slot count in templates).
EncodingRuleset load_ruleset(const std::filesystem::path& path);
EncodingRuleset parse_ruleset(const std::string& text, const std::string& origin);

struct LinguisticEncoding {
  std::string text;
  std::string source_id;
};

// Render a record as one comma-separated sentence: phrases in rule order, then
// (policy permitting) "LABEL bbox on <patch_index_A> <patch_index_B>" per box,
// closed with a period. Throws EmptyEncoding when no rule field matches,
// TypeError when a label's type contradicts the rule.
LinguisticEncoding encode_linguistic(const SampleRecord& record,
                                     const EncodingRuleset& ruleset,
                                     int grid = 32);

}  //  namespace relforge
