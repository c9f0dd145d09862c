#include "relforge/relation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include "relforge/errors.hpp"
#include "relforge/rng.hpp"

namespace relforge {

const char* to_string(Family family) {
  switch (family) {
    case Family::similarity: return "similarity";
    case Family::contrast: return "contrast";
    case Family::temporal: return "temporal";
    case Family::geometric: return "geometric";
  }
  return "unknown";
}

Family family_from_string(const std::string& name) {
  if (name == "similarity") return Family::similarity;
  if (name == "contrast") return Family::contrast;
  if (name == "temporal") return Family::temporal;
  if (name == "geometric") return Family::geometric;
  throw ConfigError("unknown relation family '" + name + "'");
}

namespace {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() &&
           std::isspace(static_cast<unsigned char>(text[pos]))) {
      ++pos;
    }
  }
  bool eat(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }
  void expect(char c, const char* what) {
    if (!eat(c)) throw ParseError(pos, what);
  }
  std::string ident() {
    skip_ws();
    std::size_t start = pos;
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) ||
            text[pos] == '_')) {
      ++pos;
    }
    return text.substr(start, pos - start);
  }
};

FieldRef parse_field_ref(Cursor& c) {
  c.skip_ws();
  std::size_t at = c.pos;
  std::string slot = c.ident();
  if (slot.size() != 1 || slot[0] < 'a' || slot[0] > 'z') {
    throw ParseError(at, "slot letter a..z");
  }
  c.expect('.', "'.' after slot");
  std::size_t fat = c.pos;
  std::string field = c.ident();
  if (field.empty()) throw ParseError(fat, "field name");
  return FieldRef{slot[0] - 'a', field};
}

PredNode parse_expr(Cursor& c) {
  c.skip_ws();
  std::size_t at = c.pos;
  std::string op = c.ident();
  PredNode node;
  bool leaf = true;
  if (op == "eq") {
    node.op = PredNode::Op::eq;
  } else if (op == "neq") {
    node.op = PredNode::Op::neq;
  } else if (op == "set_intersects") {
    node.op = PredNode::Op::set_intersects;
  } else if (op == "set_disjoint") {
    node.op = PredNode::Op::set_disjoint;
  } else if (op == "and" || op == "or" || op == "not") {
    leaf = false;
    node.op = op == "and"   ? PredNode::Op::logic_and
              : op == "or"  ? PredNode::Op::logic_or
                            : PredNode::Op::logic_not;
  } else {
    throw ParseError(at, "operator (eq, neq, set_intersects, set_disjoint, and, or, not)");
  }
  c.expect('(', "'('");
  if (leaf) {
    node.args.push_back(parse_field_ref(c));
    c.expect(',', "',' between arguments");
    node.args.push_back(parse_field_ref(c));
  } else {
    node.children.push_back(parse_expr(c));
    if (node.op != PredNode::Op::logic_not) {
      c.expect(',', "',' between operands");
      node.children.push_back(parse_expr(c));
    }
  }
  c.expect(')', "')'");
  return node;
}

void walk_refs(const PredNode& node,
               const std::function<void(const FieldRef&)>& fn) {
  for (const FieldRef& ref : node.args) fn(ref);
  for (const PredNode& child : node.children) walk_refs(child, fn);
}

bool has_set_op(const PredNode& node) {
  if (node.op == PredNode::Op::set_intersects ||
      node.op == PredNode::Op::set_disjoint) {
    return true;
  }
  return std::any_of(node.children.begin(), node.children.end(), has_set_op);
}

Family inferred_family(const PredNode& pred) {
  return has_set_op(pred) ? Family::similarity : Family::contrast;
}

void print_expr(const PredNode& node, std::string& out) {
  const char* name = nullptr;
  switch (node.op) {
    case PredNode::Op::eq: name = "eq"; break;
    case PredNode::Op::neq: name = "neq"; break;
    case PredNode::Op::set_intersects: name = "set_intersects"; break;
    case PredNode::Op::set_disjoint: name = "set_disjoint"; break;
    case PredNode::Op::logic_and: name = "and"; break;
    case PredNode::Op::logic_or: name = "or"; break;
    case PredNode::Op::logic_not: name = "not"; break;
  }
  out += name;
  out += '(';
  bool first = true;
  for (const FieldRef& ref : node.args) {
    if (!first) out += ", ";
    first = false;
    out += static_cast<char>('a' + ref.slot);
    out += '.';
    out += ref.field;
  }
  for (const PredNode& child : node.children) {
    if (!first) out += ", ";
    first = false;
    print_expr(child, out);
  }
  out += ')';
}

}  // namespace

RelationSpec parse_relation_spec(const std::string& line) {
  Cursor c{line};
  std::size_t at = c.pos;
  c.skip_ws();
  at = c.pos;
  std::string name = c.ident();
  if (name.empty()) throw ParseError(at, "relation name");
  c.skip_ws();
  if (!(c.pos + 1 < line.size() && line[c.pos] == ':' && line[c.pos + 1] == '=')) {
    throw ParseError(c.pos, "':='");
  }
  c.pos += 2;
  RelationSpec spec;
  spec.id = name;
  spec.pred = parse_expr(c);
  c.skip_ws();
  if (c.pos < line.size() && line[c.pos] == '@') {
    ++c.pos;
    std::size_t fat = c.pos;
    std::string fam = c.ident();
    try {
      spec.family = family_from_string(fam);
    } catch (const ConfigError&) {
      throw ParseError(fat, "family name after '@'");
    }
  } else {
    spec.family = inferred_family(spec.pred);
  }
  c.skip_ws();
  if (c.pos != line.size()) throw ParseError(c.pos, "end of line");

  int max_slot = -1;
  walk_refs(spec.pred, [&](const FieldRef& ref) {
    max_slot = std::max(max_slot, ref.slot);
  });
  spec.arity = max_slot + 1;
  if (spec.arity < 2) {
    throw ParseError(line.size(), "at least two slots (arity >= 2)");
  }
  return spec;
}

std::string print_relation_spec(const RelationSpec& spec) {
  std::string out = spec.id + " := ";
  print_expr(spec.pred, out);
  if (spec.family != inferred_family(spec.pred)) {
    out += " @";
    out += to_string(spec.family);
  }
  return out;
}

std::vector<RelationSpec> load_relation_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open relation file " + path.string());
  std::vector<RelationSpec> specs;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = line.substr(0, line.find('#'));
    bool blank = std::all_of(body.begin(), body.end(), [](unsigned char c) {
      return std::isspace(c);
    });
    if (blank) continue;
    try {
      specs.push_back(parse_relation_spec(body));
    } catch (const ParseError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  if (specs.empty()) {
    throw ConfigError(path.string() + ": no relation specs defined");
  }
  return specs;
}

namespace {

const LabelValue& field_of(const SampleRecord& record, const std::string& field) {
  auto it = record.labels.find(field);
  if (it == record.labels.end()) throw MissingField(record.id, field);
  return it->second;
}

bool scalar_equal(const LabelValue& a, const LabelValue& b) {
  if (std::holds_alternative<std::set<std::string>>(a) ||
      std::holds_alternative<std::set<std::string>>(b)) {
    throw TypeError("eq/neq require scalar operands");
  }
  if (a.index() != b.index()) {
    throw TypeError("comparing labels of different types");
  }
  return a == b;
}

bool sets_intersect(const LabelValue& a, const LabelValue& b) {
  const auto* sa = std::get_if<std::set<std::string>>(&a);
  const auto* sb = std::get_if<std::set<std::string>>(&b);
  if (!sa || !sb) throw TypeError("set operators require string-set operands");
  const auto& small = sa->size() <= sb->size() ? *sa : *sb;
  const auto& large = sa->size() <= sb->size() ? *sb : *sa;
  return std::any_of(small.begin(), small.end(),
                     [&](const std::string& e) { return large.count(e) > 0; });
}

bool eval_node(const PredNode& node,
               const std::vector<const SampleRecord*>& records) {
  auto value = [&](const FieldRef& ref) -> const LabelValue& {
    return field_of(*records[ref.slot], ref.field);
  };
  switch (node.op) {
    case PredNode::Op::eq:
      return scalar_equal(value(node.args[0]), value(node.args[1]));
    case PredNode::Op::neq:
      return !scalar_equal(value(node.args[0]), value(node.args[1]));
    case PredNode::Op::set_intersects:
      return sets_intersect(value(node.args[0]), value(node.args[1]));
    case PredNode::Op::set_disjoint:
      return !sets_intersect(value(node.args[0]), value(node.args[1]));
    case PredNode::Op::logic_and:
      return eval_node(node.children[0], records) &&
             eval_node(node.children[1], records);
    case PredNode::Op::logic_or:
      return eval_node(node.children[0], records) ||
             eval_node(node.children[1], records);
    case PredNode::Op::logic_not:
      return !eval_node(node.children[0], records);
  }
  throw TypeError("unreachable predicate op");
}

}  // namespace

bool eval_relation(const RelationSpec& spec,
                   const std::vector<const SampleRecord*>& records) {
  if (static_cast<int>(records.size()) != spec.arity) {
    throw TypeError("relation '" + spec.id + "' expects " +
                    std::to_string(spec.arity) + " records, got " +
                    std::to_string(records.size()));
  }
  return eval_node(spec.pred, records);
}

CollectResult collect_pairs(const std::vector<SampleRecord>& records,
                            const RelationSpec& spec, std::size_t budget,
                            double positive_ratio, std::uint64_t seed) {
  if (records.empty()) {
    throw EmptyStore("collect_pairs over an empty record store");
  }
  const int k = spec.arity;

  // Referenced fields per slot; a tuple is eligible only when every slot's
  // record carries every field that slot uses.
  std::vector<std::vector<std::string>> slot_fields(k);
  walk_refs(spec.pred, [&](const FieldRef& ref) {
    auto& fields = slot_fields[ref.slot];
    if (std::find(fields.begin(), fields.end(), ref.field) == fields.end()) {
      fields.push_back(ref.field);
    }
  });
  auto eligible = [&](const SampleRecord& r, int slot) {
    for (const std::string& f : slot_fields[slot]) {
      if (!r.labels.count(f)) return false;
    }
    return true;
  };

  std::vector<std::vector<std::size_t>> positives;
  std::vector<std::vector<std::size_t>> negatives;
  const std::size_t n = records.size();
  if (n >= static_cast<std::size_t>(k)) {
    std::vector<std::size_t> combo(k);
    for (int i = 0; i < k; ++i) combo[i] = i;
    while (true) {
      bool ok = true;
      for (int s = 0; s < k && ok; ++s) ok = eligible(records[combo[s]], s);
      if (ok) {
        std::vector<const SampleRecord*> tuple(k);
        for (int s = 0; s < k; ++s) tuple[s] = &records[combo[s]];
        (eval_relation(spec, tuple) ? positives : negatives).push_back(combo);
      }
      // next combination in lexicographic order
      int i = k - 1;
      while (i >= 0 && combo[i] == n - static_cast<std::size_t>(k - i)) --i;
      if (i < 0) break;
      ++combo[i];
      for (int j = i + 1; j < k; ++j) combo[j] = combo[j - 1] + 1;
    }
  }

  CollectStats stats;
  stats.available_pos = positives.size();
  stats.available_neg = negatives.size();
  stats.requested_budget = budget;
  stats.requested_ratio = positive_ratio;

  // Cap at what exists before doing ratio arithmetic so an effectively
  // unbounded budget cannot overflow.
  std::size_t effective = std::min(budget, positives.size() + negatives.size());
  std::size_t want_pos = static_cast<std::size_t>(
      std::llround(static_cast<double>(effective) * positive_ratio));
  if (want_pos > effective) want_pos = effective;
  std::size_t want_neg = effective - want_pos;
  std::size_t take_pos = std::min(want_pos, positives.size());
  std::size_t take_neg = std::min(want_neg, negatives.size());
  // Backfill whichever class still has supply.
  std::size_t spare = effective - take_pos - take_neg;
  std::size_t extra_neg = std::min(spare, negatives.size() - take_neg);
  take_neg += extra_neg;
  spare -= extra_neg;
  take_pos += std::min(spare, positives.size() - take_pos);

  stats.shortfall_pos = want_pos > stats.available_pos
                            ? want_pos - stats.available_pos
                            : 0;
  stats.shortfall_neg = want_neg > stats.available_neg
                            ? want_neg - stats.available_neg
                            : 0;

  Rng rng(seed);
  std::vector<std::vector<std::size_t>> chosen_pos = rng.sample(positives, take_pos);
  std::vector<std::vector<std::size_t>> chosen_neg = rng.sample(negatives, take_neg);
  stats.emitted_pos = chosen_pos.size();
  stats.emitted_neg = chosen_neg.size();

  CollectResult result;
  result.stats = stats;
  auto emit = [&](const std::vector<std::size_t>& combo, bool truth) {
    RelationPair pair;
    for (std::size_t idx : combo) pair.record_ids.push_back(records[idx].id);
    pair.relation_id = spec.id;
    pair.truth = truth;
    result.pairs.push_back(std::move(pair));
  };
  for (const auto& combo : chosen_pos) emit(combo, true);
  for (const auto& combo : chosen_neg) emit(combo, false);
  return result;
}

}  // namespace relforge
