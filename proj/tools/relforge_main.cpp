#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "relforge/errors.hpp"
#include "relforge/eval.hpp"
#include "relforge/grounding.hpp"
#include "relforge/hash.hpp"
#include "relforge/ingest.hpp"
#include "relforge/llm_client.hpp"
#include "relforge/pipeline.hpp"
#include "relforge/rng.hpp"

namespace rf = relforge;

namespace {

void emit_summary(const nlohmann::ordered_json& summary) {
  std::cout << summary.dump() << "\n";
}

std::string hash_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& payload) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw rf::IoError("cannot open for writing: " + tmp.string());
    out << payload;
    if (!out) throw rf::IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw rf::IoError("rename failed: " + path.string() + ": " + ec.message());
}

std::vector<double> parse_doubles(const std::string& text, std::size_t expected,
                                  const std::string& what) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    std::string part =
        comma == std::string::npos ? text.substr(pos) : text.substr(pos, comma - pos);
    try {
      std::size_t used = 0;
      values.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw rf::ConfigError("cannot parse " + what + ": '" + part + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (values.size() != expected)
    throw rf::ConfigError(what + " needs " + std::to_string(expected) +
                          " comma-separated values");
  return values;
}

std::vector<rf::SampleRecord> read_all_records(const std::vector<std::string>& paths) {
  std::vector<rf::SampleRecord> records;
  for (const std::string& path : paths) {
    auto part = rf::read_records(path);
    records.insert(records.end(), part.begin(), part.end());
  }
  return records;
}

rf::TemplateStore load_templates(const std::string& path) {
  if (path.empty()) return rf::TemplateStore::builtin();
  return rf::TemplateStore::load_file(path);
}

std::unique_ptr<rf::ChatClient> make_client(bool offline) {
  if (offline) return nullptr;  // offline mode never touches the network
  return rf::make_http_client(rf::http_config_from_env());
}

struct IngestArgs {
  std::string kind, input, dataset = "dataset", output, delimiter = ",";
};

int cmd_ingest(const IngestArgs& args) {
  rf::IngestResult result;
  if (args.kind == "detection") {
    result = rf::parse_detection_annotations(args.input, args.dataset);
  } else if (args.kind == "attributes") {
    if (args.delimiter.size() != 1)
      throw rf::ConfigError("--delimiter must be a single character");
    result = rf::parse_attribute_table(args.input, args.dataset, args.delimiter[0]);
  } else {
    result = rf::parse_video_captions(args.input, args.dataset);
  }
  for (const std::string& issue : result.issues) std::cerr << issue << "\n";
  rf::write_records(result.records, args.output);
  nlohmann::ordered_json summary;
  summary["command"] = "ingest";
  summary["kind"] = args.kind;
  summary["records"] = result.records.size();
  summary["skipped"] = result.skipped;
  summary["output"] = args.output;
  emit_summary(summary);
  return 0;
}

struct BuildArgs {
  std::vector<std::string> records;
  std::string relations, ruleset, templates, output;
  std::size_t budget = 100;
  double pos_ratio = 0.5;
  std::uint64_t seed = 0;
  int jobs = 0;
  int grid = 32;
  bool offline = false;
  bool no_filter = false;
  rf::FilterThresholds thresholds;
};

int cmd_build(const BuildArgs& args) {
  auto records = read_all_records(args.records);
  auto specs = rf::load_relation_file(args.relations);
  if (specs.empty()) throw rf::ConfigError("relation file declares no relations");
  auto ruleset = rf::load_ruleset(args.ruleset);
  auto templates = load_templates(args.templates);
  auto client = make_client(args.offline);

  rf::BuildOptions options;
  options.budget = args.budget;
  options.positive_ratio = args.pos_ratio;
  options.seed = args.seed;
  options.jobs = args.jobs;
  options.grid = args.grid;
  options.apply_filter = !args.no_filter;
  options.thresholds = args.thresholds;

  std::vector<rf::DialogSample> corpus;
  rf::BuildReport total;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    rf::BuildOptions per_spec = options;
    per_spec.seed = rf::mix_seed(args.seed, i);
    auto [samples, report] =
        rf::build_pair_corpus(records, specs[i], ruleset, templates, client.get(),
                              per_spec);
    corpus.insert(corpus.end(), samples.begin(), samples.end());
    total.generated += report.generated;
    total.kept += report.kept;
    total.dropped += report.dropped;
    total.fallback_count += report.fallback_count;
    for (const auto& [reason, count] : report.drop_reasons)
      total.drop_reasons[reason] += count;
  }

  auto lint = rf::lint_corpus(corpus);
  for (const std::string& issue : lint) std::cerr << "lint: " << issue << "\n";
  if (!lint.empty()) throw rf::Error("corpus failed lint; nothing written");
  rf::write_corpus(corpus, args.output);

  nlohmann::ordered_json summary;
  summary["command"] = "build";
  summary["relations"] = specs.size();
  summary["generated"] = total.generated;
  summary["kept"] = total.kept;
  summary["dropped"] = total.dropped;
  summary["fallback"] = total.fallback_count;
  summary["drop_reasons"] = total.drop_reasons;
  summary["corpus_hash"] = hash_hex(rf::fnv1a_file(args.output));
  summary["output"] = args.output;
  emit_summary(summary);
  return 0;
}

struct SynthArgs {
  std::string manifest, out_dir, output;
  std::uint64_t seed = 0;
  int jobs = 0;
  int grid = 32;
};

int cmd_synth_geom(const SynthArgs& args) {
  auto jobs = rf::load_geom_manifest(args.manifest);
  auto [pairs, report] =
      rf::build_geom_corpus(jobs, args.out_dir, args.seed, args.jobs, args.grid);
  rf::write_synth_pairs(pairs, args.output);
  nlohmann::ordered_json summary;
  summary["command"] = "synth_geom";
  summary["requested"] = report.requested;
  summary["synthesized"] = report.synthesized;
  summary["exhausted"] = report.exhausted;
  summary["output"] = args.output;
  emit_summary(summary);
  return 0;
}

struct TemporalArgs {
  std::vector<std::string> records;
  std::string templates, output;
  int frames = 4;
  std::uint64_t seed = 0;
  int jobs = 0;
  bool offline = false;
};

int cmd_temporal(const TemporalArgs& args) {
  auto records = read_all_records(args.records);
  auto templates = load_templates(args.templates);
  auto client = make_client(args.offline);
  rf::TemporalOptions options;
  options.frames = args.frames;
  options.seed = args.seed;
  options.jobs = args.jobs;
  auto [samples, report] =
      rf::build_temporal_corpus(records, templates, client.get(), options);
  auto lint = rf::lint_corpus(samples);
  for (const std::string& issue : lint) std::cerr << "lint: " << issue << "\n";
  if (!lint.empty()) throw rf::Error("corpus failed lint; nothing written");
  rf::write_corpus(samples, args.output);
  nlohmann::ordered_json summary;
  summary["command"] = "temporal";
  summary["videos"] = report.videos;
  summary["skipped_short"] = report.skipped_short;
  summary["describe_samples"] = report.describe_samples;
  summary["order_samples"] = report.order_samples;
  summary["corpus_hash"] = hash_hex(rf::fnv1a_file(args.output));
  summary["output"] = args.output;
  emit_summary(summary);
  return 0;
}

struct FilterArgs {
  std::string input, output;
  rf::FilterThresholds thresholds;
};

int cmd_filter(const FilterArgs& args) {
  auto samples = rf::read_corpus(args.input);
  std::vector<rf::DialogSample> kept;
  std::map<std::string, std::size_t> reasons;
  for (auto& sample : samples) {
    auto decision = rf::filter_quality(sample, args.thresholds);
    if (decision.keep) {
      kept.push_back(std::move(sample));
    } else {
      for (const std::string& reason : decision.reasons) ++reasons[reason];
    }
  }
  rf::write_corpus(kept, args.output);
  nlohmann::ordered_json summary;
  summary["command"] = "filter";
  summary["input_samples"] = samples.size();
  summary["kept"] = kept.size();
  summary["dropped"] = samples.size() - kept.size();
  summary["drop_reasons"] = reasons;
  summary["output"] = args.output;
  emit_summary(summary);
  return 0;
}

struct EvalArgs {
  std::string pred, gold, report_path;
  double iou_threshold = 0.5;
  int grid = 32;
  bool judge = false;
  int k_shot = 0;
  std::string pool, queries, fewshot_out;
  std::uint64_t seed = 0;
};

std::vector<rf::FewShotItem> load_fewshot_pool(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw rf::IoError("cannot open pool: " + path.string());
  std::vector<rf::FewShotItem> pool;
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
      throw rf::SchemaError(where, "", std::string("bad JSON: ") + e.what());
    }
    for (auto& [key, value] : j.items()) {
      (void)value;
      if (key != "image" && key != "positive" && key != "answer")
        throw rf::SchemaError(where, key, "unknown field");
    }
    try {
      pool.push_back(rf::FewShotItem{j.at("image").get<std::string>(),
                                     j.at("positive").get<bool>(),
                                     j.at("answer").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw rf::SchemaError(where, "item", e.what());
    }
  }
  return pool;
}

int cmd_eval(const EvalArgs& args) {
  rf::EvalConfig config;
  config.iou_threshold = args.iou_threshold;
  config.grid = args.grid;

  if (args.k_shot > 0) {
    if (args.pool.empty() || args.queries.empty() || args.fewshot_out.empty())
      throw rf::ConfigError("--k-shot needs --pool, --queries and --fewshot-out");
    auto pool = load_fewshot_pool(args.pool);
    std::ifstream in(args.queries, std::ios::binary);
    if (!in) throw rf::IoError("cannot open queries: " + args.queries);
    std::string payload, query;
    std::size_t count = 0, shortfall = 0;
    while (std::getline(in, query)) {
      if (query.empty()) continue;
      auto prompt = rf::assemble_fewshot_prompt(pool, args.k_shot, query,
                                                config.fewshot_question,
                                                rf::mix_seed(args.seed, count));
      nlohmann::ordered_json line;
      line["query"] = query;
      line["k"] = args.k_shot;
      line["shortfall"] = prompt.shortfall;
      line["text"] = prompt.text;
      payload += line.dump();
      payload += "\n";
      ++count;
      shortfall += prompt.shortfall;
    }
    write_text_atomic(args.fewshot_out, payload);
    nlohmann::ordered_json summary;
    summary["command"] = "eval";
    summary["mode"] = "fewshot";
    summary["k"] = args.k_shot;
    summary["prompts"] = count;
    summary["shortfall"] = shortfall;
    summary["output"] = args.fewshot_out;
    emit_summary(summary);
    return 0;
  }

  if (args.pred.empty() || args.gold.empty())
    throw rf::ConfigError("scoring mode needs --pred and --gold");
  auto gold = rf::read_corpus(args.gold);
  auto predictions = rf::load_predictions(args.pred);
  std::unique_ptr<rf::ChatClient> judge;
  if (args.judge) judge = rf::make_http_client(rf::http_config_from_env());
  rf::EvalReport report = rf::run_eval(gold, predictions, config, judge.get());
  std::string rendered = rf::report_to_json(report);
  if (!args.report_path.empty()) write_text_atomic(args.report_path, rendered + "\n");
  std::cout << rendered << "\n";
  return 0;
}

struct CodecArgs {
  std::string box, pair;
  int grid = 32;
};

int cmd_codec_encode(const CodecArgs& args) {
  auto values = parse_doubles(args.box, 4, "--box");
  auto pair = rf::encode_box(
      rf::NormBox{values[0], values[1], values[2], values[3]}, args.grid);
  std::cout << pair.tl << " " << pair.br << "\n";
  return 0;
}

int cmd_codec_decode(const CodecArgs& args) {
  auto values = parse_doubles(args.pair, 2, "--pair");
  rf::PatchIndexPair pair{static_cast<int>(values[0]), static_cast<int>(values[1])};
  rf::NormBox box = rf::decode_pair(pair, args.grid);
  std::cout << nlohmann::json(box.x1).dump() << " " << nlohmann::json(box.y1).dump()
            << " " << nlohmann::json(box.x2).dump() << " "
            << nlohmann::json(box.y2).dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relforge: relation-aware vision-language training data toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file; sections name subcommands");
  int default_jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (default_jobs < 1) default_jobs = 1;

  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "Normalize a dataset into the record store");
  ingest->add_option("--kind", ingest_args.kind, "detection | attributes | captions")
      ->required()
      ->check(CLI::IsMember({"detection", "attributes", "captions"}));
  ingest->add_option("--input", ingest_args.input)->required();
  ingest->add_option("--dataset", ingest_args.dataset, "Dataset name for provenance");
  ingest->add_option("--delimiter", ingest_args.delimiter, "Attribute table delimiter");
  ingest->add_option("--output", ingest_args.output)->required();

  BuildArgs build_args;
  build_args.jobs = default_jobs;
  auto* build = app.add_subcommand("build", "Collect relation pairs and build a dialogue corpus");
  build->add_option("--records", build_args.records, "Record store(s)")->required();
  build->add_option("--relations", build_args.relations, "Relation definition file")->required();
  build->add_option("--ruleset", build_args.ruleset, "Linguistic encoding ruleset")->required();
  build->add_option("--templates", build_args.templates, "Prompt template file (default: built-in)");
  build->add_option("--output", build_args.output)->required();
  build->add_option("--budget", build_args.budget, "Pairs per relation");
  build->add_option("--pos-ratio", build_args.pos_ratio, "Positive fraction of the budget");
  build->add_option("--seed", build_args.seed);
  build->add_option("--jobs", build_args.jobs);
  build->add_option("--grid", build_args.grid);
  build->add_flag("--offline", build_args.offline, "Generate with the deterministic fallback only");
  build->add_flag("--no-filter", build_args.no_filter, "Skip the quality filter");
  build->add_option("--clip-threshold", build_args.thresholds.clip_score);
  build->add_option("--conf-threshold", build_args.thresholds.bbox_confidence);
  build->add_option("--min-words", build_args.thresholds.min_words);

  SynthArgs synth_args;
  synth_args.jobs = default_jobs;
  auto* synth = app.add_subcommand("synth-geom", "Synthesize geometric transform pairs");
  synth->add_option("--manifest", synth_args.manifest, "JSONL of {image, mask, label}")->required();
  synth->add_option("--out-dir", synth_args.out_dir, "Directory for synthesized images")->required();
  synth->add_option("--output", synth_args.output, "Pair record output")->required();
  synth->add_option("--seed", synth_args.seed);
  synth->add_option("--jobs", synth_args.jobs);
  synth->add_option("--grid", synth_args.grid);

  TemporalArgs temporal_args;
  temporal_args.jobs = default_jobs;
  auto* temporal = app.add_subcommand("temporal", "Build temporal describe/order samples");
  temporal->add_option("--records", temporal_args.records, "Video record store(s)")->required();
  temporal->add_option("--templates", temporal_args.templates);
  temporal->add_option("--output", temporal_args.output)->required();
  temporal->add_option("--frames", temporal_args.frames, "Frames per sample (2-8)");
  temporal->add_option("--seed", temporal_args.seed);
  temporal->add_option("--jobs", temporal_args.jobs);
  temporal->add_flag("--offline", temporal_args.offline);

  FilterArgs filter_args;
  auto* filter = app.add_subcommand("filter", "Apply the quality filter to a corpus");
  filter->add_option("--input", filter_args.input)->required();
  filter->add_option("--output", filter_args.output)->required();
  filter->add_option("--clip-threshold", filter_args.thresholds.clip_score);
  filter->add_option("--conf-threshold", filter_args.thresholds.bbox_confidence);
  filter->add_option("--min-words", filter_args.thresholds.min_words);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score predictions or assemble k-shot prompts");
  eval->add_option("--pred", eval_args.pred, "Predictions JSONL ({id, answer_text})");
  eval->add_option("--gold", eval_args.gold, "Gold corpus");
  eval->add_option("--report", eval_args.report_path, "Also write the report here");
  eval->add_option("--iou-threshold", eval_args.iou_threshold);
  eval->add_option("--grid", eval_args.grid);
  eval->add_flag("--judge", eval_args.judge, "Score answers with the LLM judge");
  eval->add_option("--k-shot", eval_args.k_shot, "Assemble k-shot prompts instead of scoring");
  eval->add_option("--pool", eval_args.pool, "Few-shot example pool JSONL");
  eval->add_option("--queries", eval_args.queries, "Query image refs, one per line");
  eval->add_option("--fewshot-out", eval_args.fewshot_out);
  eval->add_option("--seed", eval_args.seed);

  CodecArgs codec_args;
  auto* codec = app.add_subcommand("codec", "Box <-> patch-index token utility");
  codec->require_subcommand(1);
  auto* codec_encode = codec->add_subcommand("encode", "Box to token bins");
  codec_encode->add_option("--box", codec_args.box, "x1,y1,x2,y2 normalized")->required();
  codec_encode->add_option("--grid", codec_args.grid);
  auto* codec_decode = codec->add_subcommand("decode", "Token bins to box");
  codec_decode->add_option("--pair", codec_args.pair, "tl,br bins")->required();
  codec_decode->add_option("--grid", codec_args.grid);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_args);
    if (*build) return cmd_build(build_args);
    if (*synth) return cmd_synth_geom(synth_args);
    if (*temporal) return cmd_temporal(temporal_args);
    if (*filter) return cmd_filter(filter_args);
    if (*eval) return cmd_eval(eval_args);
    if (*codec_encode) return cmd_codec_encode(codec_args);
    if (*codec_decode) return cmd_codec_decode(codec_args);
    throw rf::ConfigError("no subcommand selected");
  } catch (const rf::ClientError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const rf::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const rf::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const rf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
