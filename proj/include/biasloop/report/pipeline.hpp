#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasloop/adapters/backend.hpp"
#include "biasloop/adapters/synthetic_world.hpp"
#include "biasloop/loop/loop_engine.hpp"
#include "biasloop/report/config.hpp"
#include "biasloop/report/run_store.hpp"
#include "biasloop/saliency/saliency.hpp"
#include "biasloop/stats/stats.hpp"

namespace biasloop::report {

// ---- corpus -----------------------------------------------------------------

struct Corpus {
  nlohmann::json document;  // hashed into the run manifest
  std::vector<loop::SeedSpec> seeds;
};

// {"seeds": [{"id", "label", "kind": "image"|"text", "image": "relative.png"}]}
// or {"synthetic": {"count": N, "kind": "image"|"text", "labels": [...], "seed": S}},
// the latter drawing seed images from the configured synthetic world.
Corpus load_corpus(const fs::path& path, const RunConfig& config);
Corpus parse_corpus(const nlohmann::json& document, const fs::path& base_dir, const RunConfig& config);

// `count` seeds cycling through `labels` (default: admissible labels without "unsure").
Corpus synthetic_corpus(const adapters::SyntheticWorld& world, std::size_t count, SeedKind kind,
                        std::vector<std::string> labels = {}, std::uint64_t seed = 0);

// ---- loop run ----------------------------------------------------------------

struct LoopRunSummary {
  std::size_t total = 0;
  std::size_t completed = 0;
  std::size_t skipped = 0;  // trace already on disk
  std::size_t failed = 0;
  std::string content_hash;
  double seconds = 0.0;
};

// Runs every seed without a stored trace (all of them with `force`), persisting
// traces, per-seed error records and the manifest.
LoopRunSummary cmd_loop_run(const RunConfig& config, const Corpus& corpus, adapters::Backend& backend,
                            const fs::path& run_dir, bool force);

// ---- annotation --------------------------------------------------------------

struct UnitAnnotations {
  std::vector<AnnotationRecord> annotations;  // before, after
  std::vector<PredictionRecord> predictions;  // before, after (when requested)
};

// Demographic answers (and constrained concept predictions) for the trace's
// first and last images.
UnitAnnotations annotate_trace(const LoopTrace& trace, adapters::Backend& backend, const DemographicSchema& schema,
                               const ConceptSpec& spec, const std::string& experiment, bool with_predictions = true);

struct AnnotateSummary {
  std::size_t units = 0;
  std::size_t flagged = 0;
  std::size_t failed = 0;
};

AnnotateSummary cmd_annotate(const fs::path& run_dir, const RunConfig& config, adapters::Backend& backend);

// ---- drift -------------------------------------------------------------------

struct DriftRow {
  std::string family;
  std::string experiment;
  std::string concept_label;
  Attribute attribute = Attribute::gender;
  PairedContingencyTable table;
  stats::DriftSummary summary;
  double q_value = 1.0;
  bool significant = false;
};

// One row per experiment x concept label x attribute with paired data; BH
// adjustment across all rows of a family.
std::vector<DriftRow> compute_drift(const std::vector<AnnotationRecord>& annotations, const DemographicSchema& schema,
                                    const RunConfig& config);

std::string drift_csv(const std::vector<DriftRow>& rows, const std::string& source_hash);
std::string drift_distributions_csv(const std::vector<DriftRow>& rows, const std::string& source_hash);
nlohmann::json drift_json(const std::vector<DriftRow>& rows, const std::string& source_hash, double alpha,
                          bool exclude_unsure = false);

// Inputs are run directories or annotation files; writes drift.csv,
// drift_distributions.csv and drift.json into `out_dir`.
std::vector<DriftRow> cmd_stats_drift(const std::vector<fs::path>& inputs, const RunConfig& config,
                                      const fs::path& out_dir);

// ---- parity ------------------------------------------------------------------

struct ParityBlock {
  std::string experiment;
  std::string concept_label;
  std::vector<stats::GroupCount> counts;
  std::optional<stats::ParityResult> parity;
  std::optional<stats::RegressionResult> regression;
  std::string error;  // why parity or regression is missing
};

std::vector<ParityBlock> compute_parity(const std::vector<PredictionRecord>& predictions);

std::string parity_table(const std::vector<ParityBlock>& blocks, const std::string& source_hash, double alpha);
std::string parity_csv(const std::vector<ParityBlock>& blocks, const std::string& source_hash);
std::string regression_csv(const std::vector<ParityBlock>& blocks, const std::string& source_hash, double alpha);

std::vector<ParityBlock> cmd_stats_parity(const std::vector<fs::path>& inputs, const RunConfig& config,
                                          const fs::path& out_dir);

// ---- saliency ----------------------------------------------------------------

// {"height", "width", "face": {x, y, w, h} | null, "body": ..., "hair": [[row, start, length], ...] | null}
RegionSet parse_region_file(const nlohmann::json& document);

struct SaliencyRow {
  std::string unit_id;
  std::string experiment;
  std::string concept_label;
  stats::Stage stage = stats::Stage::before;
  std::optional<saliency::DecisionToken> token;
  std::optional<saliency::RegionShares> shares;
  std::string excluded;  // reason, empty when shares are present
};

struct SaliencyGroup {
  std::string experiment;
  std::string concept_label;
  saliency::CorpusRegionSummary summary;
};

struct SaliencyReport {
  std::vector<SaliencyRow> rows;
  std::vector<SaliencyGroup> groups;
};

// Heatmaps are read from <heatmaps_dir>/<unit>_<stage>.json; when a file is
// missing and `backend` is given the map is fetched and stored there.
SaliencyReport cmd_saliency(const fs::path& run_dir, const fs::path& regions_dir, const fs::path& heatmaps_dir,
                            const RunConfig& config, adapters::Backend* backend, const fs::path& out_dir);

// ---- consolidated report -----------------------------------------------------

// report.json, report.txt, loops.csv, similarity.csv and distributions.csv.
nlohmann::json cmd_report(const fs::path& run_dir, const RunConfig& config, const fs::path& out_dir);

// Hash identifying a set of inputs: manifest hashes of run directories, blob
// hashes of bare files.
std::string source_hash(const std::vector<fs::path>& inputs);

}  // namespace biasloop::report
