#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "relforge/dialog.hpp"
#include "relforge/errors.hpp"

using namespace relforge;

namespace {

RelationPair reid_pair() {
  RelationPair pair;
  pair.record_ids = {"0334_c2s1", "0128_c1s2"};
  pair.relation_id = "same_id";
  pair.truth = false;
  return pair;
}

const std::string kGroundedAnswer =
    "No, they are not the same person. The <phrase> backpack </phrase> "
    "<img0> <patch_index_256> <patch_index_489> </img0> belongs to the first "
    "person only.";

DialogSample reid_sample() {
  RelationDescription desc;
  desc.text = "The main difference between them is the backpack.";
  desc.generator = "fallback";
  DialogTurns turns;
  turns.question = "Are the two people in the two images the same person?";
  turns.answer = kGroundedAnswer;
  turns.generator = "fallback";
  turns.template_id = "contrast-dialog-v1";
  return assemble_sample(reid_pair(), {"a.jpg", "b.jpg"}, desc, turns,
                         "contrast_pair", Family::contrast);
}

}  // namespace

TEST_CASE("assemble_sample: ReID pair gets the canonical grounded human turn") {
  DialogSample sample = reid_sample();
  CHECK(sample.id == "same_id_0334_c2s1_0128_c1s2");
  CHECK(sample.images == std::vector<std::string>{"a.jpg", "b.jpg"});
  CHECK(sample.family == Family::contrast);
  CHECK(sample.task_type == "contrast_pair");
  CHECK(sample.relation_id == "same_id");
  CHECK(sample.grounding);
  CHECK(sample.generator == "fallback");
  REQUIRE(sample.turns.size() == 2);
  CHECK(sample.turns[0].role == "human");
  CHECK(sample.turns[0].text ==
        "<img0> <ImageHere> </img0>, <img1> <ImageHere> </img1> "
        "Are the two people in the two images the same person? <grounding>");
  CHECK(sample.turns[1].role == "assistant");
  CHECK(sample.turns[1].text == kGroundedAnswer);
}

TEST_CASE("assemble_sample: ungrounded answers omit the grounding tag") {
  RelationDescription desc;
  desc.text = "A plain caption.";
  desc.generator = "llm";
  DialogTurns turns;
  turns.question = "What is shown?";
  turns.answer = "A dog playing in the park.";
  RelationPair pair;
  pair.record_ids = {"only"};
  pair.relation_id = "caption";
  DialogSample sample = assemble_sample(pair, {"only.jpg"}, desc, turns,
                                        "similarity_pair", Family::similarity);
  CHECK_FALSE(sample.grounding);
  CHECK(sample.turns[0].text == "<img0> <ImageHere> </img0> What is shown?");
  // The turns did not name a generator, so the description's stands.
  CHECK(sample.generator == "llm");
}

TEST_CASE("assemble_sample: undeclared image indices are rejected") {
  RelationDescription desc;
  desc.generator = "fallback";
  DialogTurns turns;
  turns.question = "Same?";
  turns.answer = "See <phrase> it </phrase> <img2> <patch_index_3> "
                 "<patch_index_44> </img2> there.";
  CHECK_THROWS_AS(assemble_sample(reid_pair(), {"a.jpg", "b.jpg"}, desc, turns,
                                  "contrast_pair", Family::contrast),
                  ImageIndexOutOfRange);
  // The description counts too, even when the answer stays in range.
  desc.text = "Background: <phrase> x </phrase> <img5> <patch_index_1> "
              "<patch_index_2> </img5>.";
  turns.answer = "Plain answer.";
  CHECK_THROWS_AS(assemble_sample(reid_pair(), {"a.jpg", "b.jpg"}, desc, turns,
                                  "contrast_pair", Family::contrast),
                  ImageIndexOutOfRange);
}

TEST_CASE("assistant_word_count: whitespace words, special tokens excluded") {
  DialogSample sample;
  sample.turns.push_back(Turn{"human", "these ten words do not count at all in here"});
  sample.turns.push_back(
      Turn{"assistant", "Yes the <phrase> dog </phrase> <img0> <patch_index_1> "
                        "<patch_index_2> </img0> runs."});
  // Stripped: "Yes the  dog ... runs." -> yes/the/dog/runs.
  CHECK(assistant_word_count(sample) == 4);
  sample.turns.push_back(Turn{"assistant", "and two more"});
  CHECK(assistant_word_count(sample) == 7);
  DialogSample empty;
  CHECK(assistant_word_count(empty) == 0);
}

namespace {

DialogSample scored_sample(double clip, double conf, int words) {
  DialogSample sample;
  sample.id = "s";
  sample.clip_score = clip;
  sample.bbox_confidence = conf;
  std::string text;
  for (int i = 0; i < words; ++i) text += "w" + std::to_string(i) + " ";
  sample.turns.push_back(Turn{"human", "q"});
  sample.turns.push_back(Turn{"assistant", text});
  return sample;
}

}  // namespace

TEST_CASE("filter_quality: strict thresholds on every criterion") {
  CHECK(filter_quality(scored_sample(0.35, 0.90, 45)).keep);
  FilterDecision clip_edge = filter_quality(scored_sample(0.34, 0.90, 45));
  CHECK_FALSE(clip_edge.keep);
  CHECK(clip_edge.reasons == std::vector<std::string>{"clip_score"});
  FilterDecision conf_edge = filter_quality(scored_sample(0.35, 0.88, 45));
  CHECK_FALSE(conf_edge.keep);
  CHECK(conf_edge.reasons == std::vector<std::string>{"bbox_confidence"});
  FilterDecision len_edge = filter_quality(scored_sample(0.35, 0.90, 40));
  CHECK_FALSE(len_edge.keep);
  CHECK(len_edge.reasons == std::vector<std::string>{"length"});
  CHECK(filter_quality(scored_sample(0.35, 0.90, 41)).keep);
  FilterDecision all_bad = filter_quality(scored_sample(0.1, 0.1, 3));
  CHECK(all_bad.reasons ==
        std::vector<std::string>{"clip_score", "bbox_confidence", "length"});
}

TEST_CASE("filter_quality: absent scores skip their criteria") {
  DialogSample sample = scored_sample(0.0, 0.0, 41);
  sample.clip_score.reset();
  sample.bbox_confidence.reset();
  CHECK(filter_quality(sample).keep);
  sample.turns.back().text = "too short";
  FilterDecision decision = filter_quality(sample);
  CHECK_FALSE(decision.keep);
  CHECK(decision.reasons == std::vector<std::string>{"length"});
}

TEST_CASE("filter_quality: raising thresholds never converts drop to keep") {
  const double clips[] = {0.2, 0.34, 0.35, 0.9};
  const double confs[] = {0.5, 0.88, 0.89, 0.99};
  const int lengths[] = {10, 40, 41, 80};
  FilterThresholds base;
  for (double c : clips) {
    for (double b : confs) {
      for (int w : lengths) {
        DialogSample sample = scored_sample(c, b, w);
        bool kept = filter_quality(sample, base).keep;
        for (double dc : {0.0, 0.1}) {
          for (double db : {0.0, 0.05}) {
            for (int dw : {0, 10}) {
              FilterThresholds raised;
              raised.clip_score = base.clip_score + dc;
              raised.bbox_confidence = base.bbox_confidence + db;
              raised.min_words = base.min_words + dw;
              bool kept_raised = filter_quality(sample, raised).keep;
              if (!kept) CHECK_FALSE(kept_raised);
              if (kept_raised) CHECK(kept);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("render_dialog: role prefixes join the stored turns") {
  DialogSample sample = reid_sample();
  std::string text = render_dialog(sample);
  CHECK(text ==
        "### Human: " + sample.turns[0].text + "\n### Assistant: " +
            sample.turns[1].text);
}

TEST_CASE("sample serialization: frozen field order and round-trip") {
  DialogSample sample = reid_sample();
  sample.clip_score = 0.5;
  std::string line = sample_to_line(sample);
  // Field order is part of the format contract (schema last).
  CHECK(line.find("{\"id\":\"same_id_0334_c2s1_0128_c1s2\",\"images\":") == 0);
  CHECK(line.find("\"schema\":\"v1\"}") == line.size() - 14);
  CHECK(line.find("\"scores\":{\"clip_score\":0.5}") != std::string::npos);
  std::size_t images_at = line.find("\"images\"");
  std::size_t turns_at = line.find("\"turns\"");
  std::size_t family_at = line.find("\"family\"");
  std::size_t task_at = line.find("\"task_type\"");
  std::size_t relation_at = line.find("\"relation_id\"");
  std::size_t grounding_at = line.find("\"grounding\"");
  std::size_t generator_at = line.find("\"generator\"");
  CHECK(images_at < turns_at);
  CHECK(turns_at < family_at);
  CHECK(family_at < task_at);
  CHECK(task_at < relation_at);
  CHECK(relation_at < grounding_at);
  CHECK(grounding_at < generator_at);

  DialogSample back = sample_from_line(line, "mem", 1);
  CHECK(back == sample);
  CHECK(sample_to_line(back) == line);

  // Without scores the object is omitted entirely.
  DialogSample bare = reid_sample();
  CHECK(sample_to_line(bare).find("scores") == std::string::npos);
  CHECK(sample_from_line(sample_to_line(bare), "mem", 1) == bare);
}

TEST_CASE("sample_from_line: strict schema with located errors") {
  DialogSample sample = reid_sample();
  std::string line = sample_to_line(sample);

  auto check_schema_error = [](const std::string& bad, const std::string& where) {
    try {
      sample_from_line(bad, "corpus.jsonl", 7);
      FAIL("expected SchemaError for: ", bad);
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("corpus.jsonl:7") != std::string::npos);
      if (!where.empty())
        CHECK(std::string(e.what()).find(where) != std::string::npos);
    }
  };
  check_schema_error("not json at all", "bad JSON");
  check_schema_error("{\"schema\":\"v2\"}", "schema");
  std::string extra = line;
  extra.insert(extra.size() - 1, ",\"surprise\":true");
  check_schema_error(extra, "surprise");
  std::string bad_role = line;
  auto pos = bad_role.find("\"human\"");
  bad_role.replace(pos, 7, "\"robot\"");
  check_schema_error(bad_role, "role");
  std::string missing = "{\"id\":\"x\",\"schema\":\"v1\"}";
  check_schema_error(missing, "");
}

TEST_CASE("corpus file: atomic write, blank-line tolerance, strict read") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "relforge_corpus_test";
  fs::create_directories(dir);
  fs::path path = dir / "corpus.jsonl";

  std::vector<DialogSample> samples{reid_sample(), reid_sample()};
  samples[1].id = "second";
  samples[1].clip_score = 0.77;
  write_corpus(samples, path);
  CHECK_FALSE(fs::exists(dir / "corpus.jsonl.tmp"));
  std::vector<DialogSample> back = read_corpus(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == samples[0]);
  CHECK(back[1] == samples[1]);

  // Appending a blank line is harmless; a corrupt line names its position.
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << "\n{oops\n";
  }
  try {
    read_corpus(path);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find(":4") != std::string::npos);
  }
  CHECK_THROWS_AS(read_corpus(dir / "absent.jsonl"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("lint_corpus: structural defects are reported per sample") {
  std::vector<DialogSample> clean{reid_sample()};
  CHECK(lint_corpus(clean).empty());

  // Assistant-first dialogue.
  DialogSample swapped = reid_sample();
  std::swap(swapped.turns[0], swapped.turns[1]);
  auto issues = lint_corpus({swapped});
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].find("first turn must be human") != std::string::npos);

  // Grammar break inside a turn.
  DialogSample broken = reid_sample();
  broken.turns[1].text += " stray <patch_index_4>";
  issues = lint_corpus({broken});
  REQUIRE(issues.size() >= 1);
  CHECK(issues[0].find("unpaired_patch") != std::string::npos);

  // Span indexing past the declared images.
  DialogSample past = reid_sample();
  past.images.pop_back();
  issues = lint_corpus({past});
  CHECK_FALSE(issues.empty());

  // Declarations must open the first human turn.
  DialogSample undeclared = reid_sample();
  undeclared.turns[0].text = "Same person? <grounding>";
  issues = lint_corpus({undeclared});
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].find("declare images in order") != std::string::npos);

  // Grounding flag must match both the tag and the answer spans.
  DialogSample lied = reid_sample();
  lied.grounding = false;
  issues = lint_corpus({lied});
  CHECK(issues.size() == 2);
  DialogSample untagged = reid_sample();
  untagged.turns[0].text.resize(untagged.turns[0].text.size() -
                                std::string(" <grounding>").size());
  issues = lint_corpus({untagged});
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].find("<grounding> tag") != std::string::npos);
}
