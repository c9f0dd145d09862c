#include <algorithm>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "relforge/errors.hpp"
#include "relforge/record.hpp"
#include "relforge/relation.hpp"
#include "relforge/rng.hpp"

using namespace relforge;

namespace {

SampleRecord person(const std::string& id, int person_id) {
  SampleRecord r;
  r.id = id;
  r.dataset = "reid";
  r.media.kind = MediaRef::Kind::image;
  r.media.path = id + ".jpg";
  r.labels["person_id"] = static_cast<std::int64_t>(person_id);
  return r;
}

SampleRecord scene(const std::string& id, std::set<std::string> cats) {
  SampleRecord r;
  r.id = id;
  r.dataset = "toy";
  r.media.kind = MediaRef::Kind::image;
  r.media.path = id + ".jpg";
  r.labels["categories"] = std::move(cats);
  return r;
}

}  // namespace

TEST_CASE("relation DSL: single-operator spec") {
  RelationSpec spec = parse_relation_spec("same_id := eq(a.person_id, b.person_id)");
  CHECK(spec.id == "same_id");
  CHECK(spec.family == Family::contrast);
  CHECK(spec.arity == 2);
  CHECK(spec.pred.op == PredNode::Op::eq);
  REQUIRE(spec.pred.args.size() == 2);
  CHECK(spec.pred.args[0] == FieldRef{0, "person_id"});
  CHECK(spec.pred.args[1] == FieldRef{1, "person_id"});
}

TEST_CASE("relation DSL: set operator infers similarity family") {
  RelationSpec spec =
      parse_relation_spec("shares_category := set_intersects(a.categories, b.categories)");
  // Compare against a hand-built tree, not just the printed form.
  PredNode expect;
  expect.op = PredNode::Op::set_intersects;
  expect.args = {FieldRef{0, "categories"}, FieldRef{1, "categories"}};
  CHECK(spec.pred == expect);
  CHECK(spec.family == Family::similarity);
  // A set op buried under logic still flips the inference.
  RelationSpec nested = parse_relation_spec(
      "mixed := and(eq(a.x, b.x), set_disjoint(a.tags, b.tags))");
  CHECK(nested.family == Family::similarity);
}

TEST_CASE("relation DSL: explicit @family annotation wins") {
  RelationSpec spec =
      parse_relation_spec("t := eq(a.person_id, b.person_id) @temporal");
  CHECK(spec.family == Family::temporal);
  // Annotation differing from the inferred default is preserved on print.
  CHECK(print_relation_spec(spec) == "t := eq(a.person_id, b.person_id) @temporal");
  // Annotation matching the inferred default is dropped on print.
  RelationSpec redundant =
      parse_relation_spec("c := eq(a.person_id, b.person_id) @contrast");
  CHECK(print_relation_spec(redundant) == "c := eq(a.person_id, b.person_id)");
}

TEST_CASE("relation DSL: parse/print round-trip on nested expressions") {
  const char* lines[] = {
      "same_id := eq(a.person_id, b.person_id)",
      "shares := set_intersects(a.categories, b.categories)",
      "distinct := set_disjoint(a.tags, b.tags)",
      "both := and(eq(a.x, b.x), neq(a.y, b.y))",
      "either := or(eq(a.x, b.x), or(eq(a.y, b.y), eq(a.z, b.z)))",
      "flipped := not(eq(a.x, b.x))",
      "trio := and(eq(a.id, b.id), eq(b.id, c.id))",
      "odd := not(and(set_intersects(a.s, b.s), not(eq(a.x, b.x))))",
  };
  for (const char* line : lines) {
    CAPTURE(line);
    RelationSpec spec = parse_relation_spec(line);
    CHECK(print_relation_spec(spec) == line);
    CHECK(parse_relation_spec(print_relation_spec(spec)) == spec);
  }
}

TEST_CASE("relation DSL: parse errors carry offset and expectation") {
  CHECK_THROWS_AS(parse_relation_spec("bad := eq(a.person_id"), ParseError);
  CHECK_THROWS_AS(parse_relation_spec(":= eq(a.x, b.x)"), ParseError);
  CHECK_THROWS_AS(parse_relation_spec("name eq(a.x, b.x)"), ParseError);
  CHECK_THROWS_AS(parse_relation_spec("r := frob(a.x, b.x)"), ParseError);
  CHECK_THROWS_AS(parse_relation_spec("r := eq(a.x)"), ParseError);
  CHECK_THROWS_AS(parse_relation_spec("r := eq(ab.x, b.x)"), ParseError);
  CHECK_THROWS_AS(parse_relation_spec("r := eq(a., b.x)"), ParseError);
  CHECK_THROWS_AS(parse_relation_spec("r := not(eq(a.x, b.x), eq(a.y, b.y))"),
                  ParseError);
  CHECK_THROWS_AS(parse_relation_spec("r := eq(a.x, b.x) trailing"), ParseError);
  CHECK_THROWS_AS(parse_relation_spec("r := eq(a.x, b.x) @bogus"), ParseError);
  // Single-slot predicates cannot express a relation between records.
  CHECK_THROWS_AS(parse_relation_spec("r := eq(a.x, a.y)"), ParseError);
  try {
    parse_relation_spec("bad := eq(a.person_id");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("','") != std::string::npos);
  }
}

TEST_CASE("eval_relation: scalar and set operators") {
  RelationSpec same_id = parse_relation_spec("same_id := eq(a.person_id, b.person_id)");
  SampleRecord p128 = person("0128_c1s1", 128);
  SampleRecord p334 = person("0334_c2s1", 334);
  SampleRecord p334b = person("0334_c5s3", 334);
  CHECK_FALSE(eval_relation(same_id, {&p128, &p334}));
  CHECK(eval_relation(same_id, {&p334, &p334b}));
  SampleRecord p7a = person("a", 7);
  SampleRecord p7b = person("b", 7);
  CHECK(eval_relation(same_id, {&p7a, &p7b}));

  RelationSpec shares =
      parse_relation_spec("shares := set_intersects(a.categories, b.categories)");
  SampleRecord s1 = scene("s1", {"dog", "frisbee"});
  SampleRecord s2 = scene("s2", {"frisbee", "grass"});
  SampleRecord s3 = scene("s3", {"car"});
  CHECK(eval_relation(shares, {&s1, &s2}));  // intersection {frisbee}
  CHECK_FALSE(eval_relation(shares, {&s1, &s3}));
  RelationSpec disjoint =
      parse_relation_spec("disjoint := set_disjoint(a.categories, b.categories)");
  CHECK(eval_relation(disjoint, {&s1, &s3}));
  CHECK_FALSE(eval_relation(disjoint, {&s1, &s2}));
}

TEST_CASE("eval_relation: missing field is an error, never false") {
  RelationSpec same_id = parse_relation_spec("same_id := eq(a.person_id, b.person_id)");
  SampleRecord has = person("has", 5);
  SampleRecord lacks;
  lacks.id = "lacks";
  CHECK_THROWS_AS(eval_relation(same_id, {&has, &lacks}), MissingField);
  CHECK_THROWS_AS(eval_relation(same_id, {&lacks, &has}), MissingField);
}

TEST_CASE("eval_relation: type mismatches and arity mismatches") {
  RelationSpec same_id = parse_relation_spec("same_id := eq(a.person_id, b.person_id)");
  SampleRecord num = person("num", 5);
  SampleRecord str = person("str", 5);
  str.labels["person_id"] = std::string{"5"};
  CHECK_THROWS_AS(eval_relation(same_id, {&num, &str}), TypeError);
  SampleRecord setty = person("setty", 5);
  setty.labels["person_id"] = std::set<std::string>{"5"};
  CHECK_THROWS_AS(eval_relation(same_id, {&num, &setty}), TypeError);

  RelationSpec shares =
      parse_relation_spec("shares := set_intersects(a.person_id, b.person_id)");
  CHECK_THROWS_AS(eval_relation(shares, {&num, &num}), TypeError);

  CHECK_THROWS_AS(eval_relation(same_id, {&num}), TypeError);
  CHECK_THROWS_AS(eval_relation(same_id, {&num, &num, &num}), TypeError);
}

TEST_CASE("eval_relation: symmetry and negation properties") {
  RelationSpec eq_spec = parse_relation_spec("p := eq(a.x, b.x)");
  RelationSpec neq_spec = parse_relation_spec("p := neq(a.x, b.x)");
  RelationSpec not_spec = parse_relation_spec("p := not(eq(a.x, b.x))");
  RelationSpec set_spec = parse_relation_spec("p := set_intersects(a.s, b.s)");
  Rng rng(20240817);
  for (int trial = 0; trial < 200; ++trial) {
    SampleRecord a, b;
    a.id = "a";
    b.id = "b";
    a.labels["x"] = rng.int_range(0, 3);
    b.labels["x"] = rng.int_range(0, 3);
    std::set<std::string> sa, sb;
    for (const char* e : {"u", "v", "w"}) {
      if (rng.coin()) sa.insert(e);
      if (rng.coin()) sb.insert(e);
    }
    a.labels["s"] = sa;
    b.labels["s"] = sb;
    // Symmetric operators on the same field of both slots.
    CHECK(eval_relation(eq_spec, {&a, &b}) == eval_relation(eq_spec, {&b, &a}));
    CHECK(eval_relation(set_spec, {&a, &b}) == eval_relation(set_spec, {&b, &a}));
    // neq and not(eq) are both the complement of eq.
    bool eq = eval_relation(eq_spec, {&a, &b});
    CHECK(eval_relation(neq_spec, {&a, &b}) == !eq);
    CHECK(eval_relation(not_spec, {&a, &b}) == !eq);
  }
}

TEST_CASE("load_relation_file: comments, blanks, and line-tagged errors") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "relforge_rel_test";
  fs::create_directories(dir);
  fs::path good = dir / "good.rel";
  {
    std::ofstream out(good);
    out << "# person re-identification\n"
        << "\n"
        << "same_id := eq(a.person_id, b.person_id)\n"
        << "shares := set_intersects(a.categories, b.categories)  # inline\n";
  }
  std::vector<RelationSpec> specs = load_relation_file(good);
  REQUIRE(specs.size() == 2);
  CHECK(specs[0].id == "same_id");
  CHECK(specs[1].id == "shares");

  fs::path bad = dir / "bad.rel";
  {
    std::ofstream out(bad);
    out << "ok := eq(a.x, b.x)\n"
        << "broken := eq(a.x\n";
  }
  try {
    load_relation_file(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.rel:2") != std::string::npos);
  }
  fs::path empty = dir / "empty.rel";
  { std::ofstream out(empty); out << "# nothing here\n"; }
  CHECK_THROWS_AS(load_relation_file(empty), ConfigError);
  CHECK_THROWS_AS(load_relation_file(dir / "absent.rel"), IoError);
  fs::remove_all(dir);
}

namespace {

// Independent oracle: enumerate every unordered pair by index, skip pairs where
// either record lacks person_id, and classify by direct label comparison.
void brute_force_same_id(const std::vector<SampleRecord>& records,
                         std::set<std::vector<std::string>>& pos,
                         std::set<std::vector<std::string>>& neg) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = i + 1; j < records.size(); ++j) {
      auto ia = records[i].labels.find("person_id");
      auto ib = records[j].labels.find("person_id");
      if (ia == records[i].labels.end() || ib == records[j].labels.end()) continue;
      std::vector<std::string> key{records[i].id, records[j].id};
      (ia->second == ib->second ? pos : neg).insert(key);
    }
  }
}

std::vector<SampleRecord> mixed_store() {
  // 30 records, 10 identities x 3 sightings -> C(3,2)*10 = 30 positive pairs.
  std::vector<SampleRecord> records;
  for (int pid = 0; pid < 10; ++pid) {
    for (int cam = 0; cam < 3; ++cam) {
      records.push_back(person(
          "p" + std::to_string(pid) + "_c" + std::to_string(cam), 100 + pid));
    }
  }
  return records;
}

}  // namespace

TEST_CASE("collect_pairs: exact balanced sample when both classes suffice") {
  RelationSpec same_id = parse_relation_spec("same_id := eq(a.person_id, b.person_id)");
  std::vector<SampleRecord> records = mixed_store();
  CollectResult result = collect_pairs(records, same_id, 10, 0.5, 42);
  CHECK(result.stats.emitted_pos == 5);
  CHECK(result.stats.emitted_neg == 5);
  CHECK(result.stats.shortfall_pos == 0);
  CHECK(result.stats.shortfall_neg == 0);
  CHECK(result.pairs.size() == 10);
  std::set<std::vector<std::string>> seen;
  for (const RelationPair& pair : result.pairs) {
    REQUIRE(pair.record_ids.size() == 2);
    CHECK(pair.record_ids[0] != pair.record_ids[1]);
    CHECK(pair.relation_id == "same_id");
    CHECK(seen.insert(pair.record_ids).second);  // no duplicate unordered pair
    // Truth recorded at construction matches a fresh evaluation.
    const SampleRecord* a = nullptr;
    const SampleRecord* b = nullptr;
    for (const SampleRecord& r : records) {
      if (r.id == pair.record_ids[0]) a = &r;
      if (r.id == pair.record_ids[1]) b = &r;
    }
    REQUIRE(a != nullptr);
    REQUIRE(b != nullptr);
    CHECK(pair.truth == eval_relation(same_id, {a, b}));
  }
}

TEST_CASE("collect_pairs: shortfall backfills from the other class") {
  RelationSpec same_id = parse_relation_spec("same_id := eq(a.person_id, b.person_id)");
  // 5 singleton identities plus one pair -> exactly 1 positive pair available.
  std::vector<SampleRecord> records;
  for (int pid = 0; pid < 5; ++pid) {
    records.push_back(person("solo" + std::to_string(pid), pid));
  }
  records.push_back(person("dup_a", 99));
  records.push_back(person("dup_b", 99));
  CollectResult result = collect_pairs(records, same_id, 10, 0.5, 7);
  CHECK(result.stats.available_pos == 1);
  CHECK(result.stats.emitted_pos == 1);
  CHECK(result.stats.emitted_neg == 9);
  CHECK(result.stats.shortfall_pos == 4);
  CHECK(result.stats.shortfall_neg == 0);
  CHECK(result.pairs.size() == 10);
}

TEST_CASE("collect_pairs: deterministic for a fixed seed") {
  RelationSpec same_id = parse_relation_spec("same_id := eq(a.person_id, b.person_id)");
  std::vector<SampleRecord> records = mixed_store();
  CollectResult first = collect_pairs(records, same_id, 20, 0.5, 42);
  CollectResult second = collect_pairs(records, same_id, 20, 0.5, 42);
  REQUIRE(first.pairs.size() == second.pairs.size());
  for (std::size_t i = 0; i < first.pairs.size(); ++i) {
    CHECK(first.pairs[i].record_ids == second.pairs[i].record_ids);
    CHECK(first.pairs[i].truth == second.pairs[i].truth);
  }
}

TEST_CASE("collect_pairs: positives match brute-force enumeration") {
  RelationSpec same_id = parse_relation_spec("same_id := eq(a.person_id, b.person_id)");
  Rng rng(3141);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<SampleRecord> records;
    std::size_t n = static_cast<std::size_t>(rng.int_range(2, 20));
    for (std::size_t i = 0; i < n; ++i) {
      SampleRecord r = person("r" + std::to_string(trial) + "_" + std::to_string(i),
                              static_cast<int>(rng.int_range(0, 4)));
      if (rng.below(6) == 0) r.labels.erase("person_id");  // ineligible slot
      records.push_back(std::move(r));
    }
    std::set<std::vector<std::string>> oracle_pos, oracle_neg;
    brute_force_same_id(records, oracle_pos, oracle_neg);
    CollectResult result =
        collect_pairs(records, same_id, 1000000, 1.0, rng.u64());
    CHECK(result.stats.available_pos == oracle_pos.size());
    CHECK(result.stats.available_neg == oracle_neg.size());
    std::set<std::vector<std::string>> got_pos;
    for (const RelationPair& pair : result.pairs) {
      if (pair.truth) got_pos.insert(pair.record_ids);
    }
    CHECK(got_pos == oracle_pos);
  }
}

TEST_CASE("collect_pairs: missing fields exclude tuples entirely") {
  RelationSpec same_id = parse_relation_spec("same_id := eq(a.person_id, b.person_id)");
  std::vector<SampleRecord> records;
  records.push_back(person("a", 1));
  records.push_back(person("b", 1));
  SampleRecord naked;
  naked.id = "naked";
  records.push_back(naked);
  CollectResult result = collect_pairs(records, same_id, 100, 0.5, 0);
  // Only (a, b) is eligible; pairs touching "naked" are neither pos nor neg.
  CHECK(result.stats.available_pos == 1);
  CHECK(result.stats.available_neg == 0);
  CHECK(result.pairs.size() == 1);
}

TEST_CASE("collect_pairs: arity-3 spec enumerates index triples") {
  RelationSpec trio =
      parse_relation_spec("trio := and(eq(a.person_id, b.person_id), eq(b.person_id, c.person_id))");
  CHECK(trio.arity == 3);
  std::vector<SampleRecord> records;
  for (int i = 0; i < 4; ++i) records.push_back(person("x" + std::to_string(i), 1));
  records.push_back(person("y", 2));
  // C(4,3) = 4 all-same triples; every triple containing "y" is negative.
  CollectResult result = collect_pairs(records, trio, 1000, 1.0, 9);
  CHECK(result.stats.available_pos == 4);
  CHECK(result.stats.available_neg == 6);  // C(5,3) - 4
  for (const RelationPair& pair : result.pairs) {
    CHECK(pair.record_ids.size() == 3);
  }
}

TEST_CASE("collect_pairs: empty store is an error") {
  RelationSpec same_id = parse_relation_spec("same_id := eq(a.person_id, b.person_id)");
  CHECK_THROWS_AS(collect_pairs({}, same_id, 10, 0.5, 0), EmptyStore);
}
