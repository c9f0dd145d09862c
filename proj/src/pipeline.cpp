#include "relforge/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "relforge/errors.hpp"
#include "relforge/image.hpp"
#include "relforge/parallel.hpp"
#include "relforge/rng.hpp"

namespace relforge {

namespace {

// Pair quality score = worst of the present per-record scores; absent when
// neither record carries one.
std::optional<double> min_present(const std::optional<double>& a,
                                  const std::optional<double>& b) {
  if (a && b) return std::min(*a, *b);
  return a ? a : b;
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

std::pair<std::vector<DialogSample>, BuildReport> build_pair_corpus(
    const std::vector<SampleRecord>& records, const RelationSpec& spec,
    const EncodingRuleset& ruleset, const TemplateStore& templates,
    ChatClient* client, const BuildOptions& options) {
  if (spec.arity != 2)
    throw ConfigError("corpus building is pairwise; relation " + spec.id +
                      " has arity " + std::to_string(spec.arity));
  BuildReport report;
  CollectResult collected = collect_pairs(records, spec, options.budget,
                                          options.positive_ratio, options.seed);
  report.collect = collected.stats;

  std::map<std::string, const SampleRecord*> by_id;
  for (const SampleRecord& record : records) by_id[record.id] = &record;

  struct PairOutput {
    DialogSample sample;
    bool fallback = false;
  };
  auto outputs = parallel_map(
      collected.pairs.size(), options.jobs, [&](std::size_t i) -> PairOutput {
        const RelationPair& pair = collected.pairs[i];
        std::vector<const SampleRecord*> members;
        std::vector<std::string> images;
        for (const std::string& id : pair.record_ids) {
          members.push_back(by_id.at(id));
          images.push_back(members.back()->media.path);
        }
        LinguisticEncoding enc_a = encode_linguistic(*members[0], ruleset, options.grid);
        LinguisticEncoding enc_b = encode_linguistic(*members[1], ruleset, options.grid);
        OrchestratorOptions orch;
        orch.grid = options.grid;
        Orchestrator orchestrator(templates, client, orch);
        RelationDescription desc =
            orchestrator.generate_description(enc_a.text, enc_b.text, spec, pair.truth);
        DialogTurns turns = orchestrator.generate_dialog(desc, spec, pair.truth);
        std::string task_type = std::string(to_string(spec.family)) + "_pair";
        DialogSample sample =
            assemble_sample(pair, images, desc, turns, task_type, spec.family);
        sample.clip_score = min_present(members[0]->clip_score, members[1]->clip_score);
        sample.bbox_confidence =
            min_present(members[0]->bbox_confidence, members[1]->bbox_confidence);
        return PairOutput{std::move(sample),
                          desc.generator == "fallback" || turns.generator == "fallback"};
      });

  std::vector<DialogSample> kept;
  for (auto& output : outputs) {
    ++report.generated;
    if (output.fallback) ++report.fallback_count;
    if (options.apply_filter) {
      FilterDecision decision = filter_quality(output.sample, options.thresholds);
      if (!decision.keep) {
        ++report.dropped;
        for (const std::string& reason : decision.reasons)
          ++report.drop_reasons[reason];
        continue;
      }
    }
    kept.push_back(std::move(output.sample));
  }
  report.kept = kept.size();
  return {std::move(kept), report};
}

std::string order_question() {
  return "The frames of this video are shuffled. What is the correct chronological "
         "order of the frames?";
}

std::pair<std::vector<DialogSample>, TemporalReport> build_temporal_corpus(
    const std::vector<SampleRecord>& records, const TemplateStore& templates,
    ChatClient* client, const TemporalOptions& options) {
  TemporalReport report;
  std::vector<const SampleRecord*> videos;
  for (const SampleRecord& record : records) {
    if (record.media.kind != MediaRef::Kind::video) continue;
    ++report.videos;
    if (record.media.frames.size() < static_cast<std::size_t>(options.frames)) {
      ++report.skipped_short;
      continue;
    }
    videos.push_back(&record);
  }

  RelationSpec chronology;
  chronology.id = "chronology";
  chronology.family = Family::temporal;

  struct VideoOutput {
    DialogSample describe;
    DialogSample order;
  };
  auto outputs = parallel_map(
      videos.size(), options.jobs, [&](std::size_t i) -> VideoOutput {
        const SampleRecord& record = *videos[i];
        FrameSequence seq =
            sample_frames(record, options.frames, mix_seed(options.seed, 2 * i));
        OrchestratorOptions orch;
        Orchestrator orchestrator(templates, client, orch);

        std::string base = describe_sequence(seq);
        RelationDescription desc =
            orchestrator.generate_description(base, "", chronology, true);
        DialogTurns turns = orchestrator.generate_dialog(desc, chronology, true);
        RelationPair pair;
        pair.relation_id = chronology.id;
        pair.record_ids = {record.id};
        pair.truth = true;
        std::vector<std::string> images;
        for (const Frame& frame : seq.frames) images.push_back(frame.image);
        DialogSample describe = assemble_sample(pair, images, desc, turns,
                                                "temporal_describe", Family::temporal);
        describe.clip_score = record.clip_score;
        describe.bbox_confidence = record.bbox_confidence;

        OrderTask task = make_order_task(seq, mix_seed(options.seed, 2 * i + 1));
        DialogTurns order_turns;
        order_turns.generator = "fallback";
        order_turns.question = order_question();
        order_turns.answer = order_answer_text(task) +
                             " Expressed as ranks per shown position, that is " +
                             permutation_string(task) + ".";
        RelationDescription order_desc;
        order_desc.text = order_turns.answer;
        order_desc.generator = "fallback";
        std::vector<std::string> shuffled_images;
        for (const Frame& frame : task.shuffled) shuffled_images.push_back(frame.image);
        DialogSample order = assemble_sample(pair, shuffled_images, order_desc,
                                             order_turns, "temporal_order",
                                             Family::temporal);
        return VideoOutput{std::move(describe), std::move(order)};
      });

  std::vector<DialogSample> samples;
  for (auto& output : outputs) {
    samples.push_back(std::move(output.describe));
    ++report.describe_samples;
    samples.push_back(std::move(output.order));
    ++report.order_samples;
  }
  return {std::move(samples), report};
}

std::vector<GeomJob> load_geom_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  std::vector<GeomJob> jobs;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(where, "", std::string("bad JSON: ") + e.what());
    }
    for (auto& [key, value] : j.items()) {
      (void)value;
      if (key != "image" && key != "mask" && key != "label")
        throw SchemaError(where, key, "unknown field");
    }
    try {
      jobs.push_back(GeomJob{j.at("image").get<std::string>(),
                             j.at("mask").get<std::string>(),
                             j.at("label").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(where, "job", e.what());
    }
  }
  return jobs;
}

std::pair<std::vector<SynthPair>, GeomReport> build_geom_corpus(
    const std::vector<GeomJob>& jobs, const std::filesystem::path& out_dir,
    std::uint64_t seed, int parallel_jobs, int grid) {
  GeomReport report;
  report.requested = jobs.size();
  std::filesystem::create_directories(out_dir);

  auto outputs = parallel_map(
      jobs.size(), parallel_jobs,
      [&](std::size_t i) -> std::optional<SynthPair> {
        const GeomJob& job = jobs[i];
        Image image = read_image(job.image_path);
        Image mask = read_image(job.mask_path);
        auto result =
            synthesize_pair(image, mask, job.label, mix_seed(seed, i), SynthRanges{}, grid);
        if (!result) return std::nullopt;
        std::string stem = std::filesystem::path(job.image_path).stem().string();
        std::string name = stem + "_" + std::to_string(i) + "_" +
                           to_string(result->pair.spec.kind) +
                           (result->image.channels == 1 ? ".pgm" : ".ppm");
        auto out_path = out_dir / name;
        write_image(result->image, out_path);
        SynthPair pair = std::move(result->pair);
        pair.id = stem + "_" + std::to_string(i);
        pair.base_ref = job.image_path;
        pair.synth_ref = out_path.string();
        return pair;
      });

  std::vector<SynthPair> pairs;
  for (auto& output : outputs) {
    if (!output) {
      ++report.exhausted;
      continue;
    }
    pairs.push_back(std::move(*output));
    ++report.synthesized;
  }
  return {std::move(pairs), report};
}

void write_synth_pairs(const std::vector<SynthPair>& pairs,
                       const std::filesystem::path& path) {
  std::string payload;
  for (const SynthPair& pair : pairs) {
    payload += synth_pair_to_line(pair);
    payload += "\n";
  }
  write_atomic(path, payload);
}

std::vector<SynthPair> read_synth_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open synth pairs: " + path.string());
  std::vector<SynthPair> pairs;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    pairs.push_back(synth_pair_from_line(line, path.string(), lineno));
  }
  return pairs;
}

}  // namespace relforge
