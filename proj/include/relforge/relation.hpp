#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "relforge/record.hpp"

namespace relforge {

enum class Family { similarity, contrast, temporal, geometric };

const char* to_string(Family family);
Family family_from_string(const std::string& name);

// Reference to slot.field; slot 0 is 'a', 1 is 'b', ...
struct FieldRef {
  int slot = 0;
  std::string field;

  bool operator==(const FieldRef&) const = default;
};

// Predicate tree. Leaves (eq/neq/set ops) take exactly two field refs; and/or
// take two children, not takes one.
struct PredNode {
  enum class Op { eq, neq, set_intersects, set_disjoint, logic_and, logic_or, logic_not };
  Op op = Op::eq;
  std::vector<FieldRef> args;
  std::vector<PredNode> children;

  bool operator==(const PredNode&) const = default;
};

struct RelationSpec {
  std::string id;
  Family family = Family::contrast;
  int arity = 2;
  PredNode pred;

  bool operator==(const RelationSpec&) const = default;
};

// Line syntax: NAME := expr [@family]. Without the annotation the family is
// inferred from the predicate: any set operator makes it similarity, scalar-only
// comparisons make it contrast. Throws ParseError with the offset and what was
// expected.
RelationSpec parse_relation_spec(const std::string& line);

// Canonical form; parse_relation_spec(print_relation_spec(s)) == s. The @family
// annotation is emitted only when it differs from the inferred default.
std::string print_relation_spec(const RelationSpec& spec);

// One spec per non-empty non-comment line.
std::vector<RelationSpec> load_relation_file(const std::filesystem::path& path);

// Evaluate the predicate over records bound to slots in order. Throws
// MissingField when a referenced field is absent (never silently false) and
// TypeError on operand kind mismatches.
bool eval_relation(const RelationSpec& spec,
                   const std::vector<const SampleRecord*>& records);

struct RelationPair {
  std::vector<std::string> record_ids;
  std::string relation_id;
  bool truth = false;
};

struct CollectStats {
  std::size_t available_pos = 0;
  std::size_t available_neg = 0;
  std::size_t emitted_pos = 0;
  std::size_t emitted_neg = 0;
  std::size_t requested_budget = 0;
  double requested_ratio = 0.0;
  std::size_t shortfall_pos = 0;
  std::size_t shortfall_neg = 0;
};

struct CollectResult {
  std::vector<RelationPair> pairs;
  CollectStats stats;
};

// Enumerate unordered record tuples (store order, slot a = earlier record),
// classify each, and draw a seeded balanced sample: round(budget * ratio)
// positives, the rest negatives, backfilling from the other class when one runs
// short. Tuples where any slot lacks a referenced field are excluded entirely —
// absent data never manufactures a negative. Deterministic for a fixed seed.
// Throws EmptyStore on an empty record list.
CollectResult collect_pairs(const std::vector<SampleRecord>& records,
                            const RelationSpec& spec, std::size_t budget,
                            double positive_ratio, std::uint64_t seed);

}  // namespace relforge
