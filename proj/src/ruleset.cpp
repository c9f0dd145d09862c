#include "relforge/ruleset.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "relforge/errors.hpp"
#include "relforge/grounding.hpp"

namespace relforge {

namespace {

// Tokens are bare words or double-quoted strings (no escapes needed here).
std::vector<std::string> tokenize_line(const std::string& line, long lineno) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (std::isspace(static_cast<unsigned char>(line[i]))) {
      ++i;
      continue;
    }
    if (line[i] == '#') break;
    if (line[i] == '"') {
      std::size_t end = line.find('"', i + 1);
      if (end == std::string::npos) {
        throw RowError(lineno, "unterminated quote");
      }
      out.push_back(line.substr(i + 1, end - i - 1));
      i = end + 1;
      continue;
    }
    std::size_t end = i;
    while (end < line.size() &&
           !std::isspace(static_cast<unsigned char>(line[end]))) {
      ++end;
    }
    out.push_back(line.substr(i, end - i));
    i = end;
  }
  return out;
}

int slot_count(const std::string& tmpl) {
  int n = 0;
  for (std::size_t i = 0; i + 1 < tmpl.size(); ++i) {
    if (tmpl[i] == '{' && tmpl[i + 1] == '}') ++n;
  }
  return n;
}

std::string fill_slot(const std::string& tmpl, const std::string& value) {
  std::size_t pos = tmpl.find("{}");
  return tmpl.substr(0, pos) + value + tmpl.substr(pos + 2);
}

}  // namespace

EncodingRuleset parse_ruleset(const std::string& text, const std::string& origin) {
  EncodingRuleset rs;
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  auto has_field = [&](const std::string& name) {
    for (const auto& [fname, ftype] : rs.fields) {
      (void)ftype;
      if (fname == name) return true;
    }
    return false;
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string> tok = tokenize_line(line, lineno);
    if (tok.empty()) continue;
    const std::string& head = tok[0];
    if (head == "field") {
      if (tok.size() != 3 ||
          (tok[2] != "string" && tok[2] != "int" && tok[2] != "bool" &&
           tok[2] != "set")) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": expected 'field <name> <string|int|bool|set>'");
      }
      rs.fields.emplace_back(tok[1], tok[2]);
      continue;
    }
    if (head == "boxes") {
      if (tok.size() != 2 || (tok[1] != "suffix" && tok[1] != "omit")) {
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": expected 'boxes <suffix|omit>'");
      }
      rs.box_policy = tok[1] == "suffix" ? EncodingRuleset::BoxPolicy::suffix
                                         : EncodingRuleset::BoxPolicy::omit;
      continue;
    }
    EncodingRule rule;
    if (head == "literal") {
      rule.kind = EncodingRule::Kind::literal;
    } else if (head == "value") {
      rule.kind = EncodingRule::Kind::value;
    } else if (head == "bool") {
      rule.kind = EncodingRule::Kind::boolean;
    } else if (head == "set") {
      rule.kind = EncodingRule::Kind::set;
    } else {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": unknown directive '" + head + "'");
    }
    std::size_t want = rule.kind == EncodingRule::Kind::boolean ? 4 : 3;
    if (tok.size() != want) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": wrong argument count for '" + head + "'");
    }
    rule.field = tok[1];
    rule.phrase = tok[2];
    if (rule.kind == EncodingRule::Kind::boolean) rule.false_phrase = tok[3];
    if (!has_field(rule.field)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": rule references undeclared field '" + rule.field + "'");
    }
    int slots = slot_count(rule.phrase);
    bool needs_slot = rule.kind == EncodingRule::Kind::value ||
                      rule.kind == EncodingRule::Kind::set;
    if (needs_slot && slots != 1) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": template must contain exactly one {} slot");
    }
    if (!needs_slot &&
        (slots != 0 || slot_count(rule.false_phrase) != 0)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": phrase must not contain a {} slot");
    }
    rs.rules.push_back(rule);
  }
  if (rs.rules.empty()) {
    throw ConfigError(origin + ": ruleset declares no rules");
  }
  return rs;
}

EncodingRuleset load_ruleset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open ruleset " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ruleset(buf.str(), path.string());
}

LinguisticEncoding encode_linguistic(const SampleRecord& record,
                                     const EncodingRuleset& ruleset, int grid) {
  std::vector<std::string> phrases;
  bool any_match = false;
  for (const EncodingRule& rule : ruleset.rules) {
    auto it = record.labels.find(rule.field);
    if (it == record.labels.end()) continue;
    any_match = true;
    const LabelValue& v = it->second;
    switch (rule.kind) {
      case EncodingRule::Kind::literal:
        phrases.push_back(rule.phrase);
        break;
      case EncodingRule::Kind::value: {
        if (const auto* s = std::get_if<std::string>(&v)) {
          phrases.push_back(fill_slot(rule.phrase, *s));
        } else if (const auto* i = std::get_if<std::int64_t>(&v)) {
          phrases.push_back(fill_slot(rule.phrase, std::to_string(*i)));
        } else {
          throw TypeError("field '" + rule.field +
                          "' is not a scalar usable in a value rule");
        }
        break;
      }
      case EncodingRule::Kind::boolean: {
        const auto* b = std::get_if<bool>(&v);
        if (!b) {
          throw TypeError("field '" + rule.field + "' is not boolean");
        }
        const std::string& phrase = *b ? rule.phrase : rule.false_phrase;
        if (!phrase.empty()) phrases.push_back(phrase);
        break;
      }
      case EncodingRule::Kind::set: {
        const auto* set = std::get_if<std::set<std::string>>(&v);
        if (!set) {
          throw TypeError("field '" + rule.field + "' is not a string set");
        }
        for (const std::string& e : *set) {
          phrases.push_back(fill_slot(rule.phrase, e));
        }
        break;
      }
    }
  }
  if (!any_match) {
    throw EmptyEncoding("no rule matches any label of record '" + record.id + "'");
  }
  if (ruleset.box_policy == EncodingRuleset::BoxPolicy::suffix) {
    for (const auto& [label, box] : record.boxes) {
      PatchIndexPair p = encode_box(box, grid);
      phrases.push_back(label + " bbox on " + patch_token(p.tl) + " " +
                        patch_token(p.br));
    }
  }
  LinguisticEncoding enc;
  enc.source_id = record.id;
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (i) enc.text += ", ";
    enc.text += phrases[i];
  }
  enc.text += ".";
  return enc;
}

}  // namespace relforge
