#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "relforge/dialog.hpp"
#include "relforge/geom_synth.hpp"
#include "relforge/orchestrator.hpp"
#include "relforge/relation.hpp"
#include "relforge/ruleset.hpp"
#include "relforge/temporal.hpp"
#include "relforge/templates.hpp"

namespace relforge {

struct BuildOptions {
  std::size_t budget = 100;     // per relation spec
  double positive_ratio = 0.5;
  std::uint64_t seed = 0;
  int jobs = 1;
  int grid = 32;
  bool apply_filter = true;
  FilterThresholds thresholds;
};

struct BuildReport {
  CollectStats collect;
  std::size_t generated = 0;
  std::size_t kept = 0;
  std::size_t dropped = 0;
  std::map<std::string, std::size_t> drop_reasons;
  std::size_t fallback_count = 0;
};

// Full pair pipeline for one relation spec: collect pairs, encode both records,
// generate description and dialogue (per-pair seeded, order-preserving across
// jobs), assemble, filter. Null client = offline fallback generation.
std::pair<std::vector<DialogSample>, BuildReport> build_pair_corpus(
    const std::vector<SampleRecord>& records, const RelationSpec& spec,
    const EncodingRuleset& ruleset, const TemplateStore& templates,
    ChatClient* client, const BuildOptions& options);

struct TemporalOptions {
  int frames = 4;  // k
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct TemporalReport {
  std::size_t videos = 0;
  std::size_t skipped_short = 0;  // fewer than k frames
  std::size_t describe_samples = 0;
  std::size_t order_samples = 0;
};

// Fixed question for frame-reordering tasks.
std::string order_question();

// Two samples per eligible video record: a chronological description QA and a
// shuffled-frame reordering QA whose answer carries both the marker ordering
// and the rank string.
std::pair<std::vector<DialogSample>, TemporalReport> build_temporal_corpus(
    const std::vector<SampleRecord>& records, const TemplateStore& templates,
    ChatClient* client, const TemporalOptions& options);

struct GeomJob {
  std::string image_path;
  std::string mask_path;
  std::string label;
};

// {image, mask, label} JSONL manifest for synthesis inputs.
std::vector<GeomJob> load_geom_manifest(const std::filesystem::path& path);

struct GeomReport {
  std::size_t requested = 0;
  std::size_t synthesized = 0;
  std::size_t exhausted = 0;  // all transform attempts landed out of frame
};

// Synthesizes one transformed pair per job, writes the edited image next to the
// given output directory, and returns the pair records.
std::pair<std::vector<SynthPair>, GeomReport> build_geom_corpus(
    const std::vector<GeomJob>& jobs, const std::filesystem::path& out_dir,
    std::uint64_t seed, int parallel_jobs, int grid = 32);

void write_synth_pairs(const std::vector<SynthPair>& pairs,
                       const std::filesystem::path& path);
std::vector<SynthPair> read_synth_pairs(const std::filesystem::path& path);

}  // namespace relforge
