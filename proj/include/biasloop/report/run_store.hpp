#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasloop/core/labels.hpp"
#include "biasloop/core/loop_trace.hpp"
#include "biasloop/loop/loop_engine.hpp"
#include "biasloop/stats/stats.hpp"

namespace biasloop::report {

namespace fs = std::filesystem;

// Images up to `inline_limit` bytes are embedded as base64; larger ones are
// written next to the trace as <stem>.<n>.png and referenced by name.
nlohmann::json trace_to_json(const LoopTrace& trace, std::size_t inline_limit = SIZE_MAX,
                             const fs::path& overflow_dir = {});
// Throws IoError for missing overflow files and ProtocolViolation for malformed documents.
LoopTrace trace_from_json(const nlohmann::json& document, const fs::path& base_dir = {});

struct AnnotationRecord {
  std::string unit_id;
  std::string experiment;
  std::string label;  // seed (ground-truth) concept label
  stats::Stage stage = stats::Stage::before;
  DemographicProfile profile = DemographicProfile::all_unsure();
  bool flagged = false;
  std::string raw;
};

struct PredictionRecord {
  std::string unit_id;
  std::string experiment;
  std::string label;
  stats::Stage stage = stats::Stage::before;
  std::string gender;                    // perceived gender of the same image
  std::optional<std::string> predicted;  // empty when no admissible label was produced
  std::string text;
  std::vector<std::string> tokens;
  bool correct = false;
};

nlohmann::json to_json(const AnnotationRecord& record);
AnnotationRecord annotation_from_json(const nlohmann::json& row, const DemographicSchema& schema);
nlohmann::json to_json(const PredictionRecord& record);
PredictionRecord prediction_from_json(const nlohmann::json& row);

// Whole-file helpers; writes go through a temporary file and a rename.
void write_text(const fs::path& path, const std::string& content);
std::string read_text(const fs::path& path);
nlohmann::json read_json(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& document);
std::vector<nlohmann::json> read_jsonl(const fs::path& path);
void write_jsonl(const fs::path& path, const std::vector<nlohmann::json>& rows);

// Git blob hash of the canonical dump of config and corpus documents.
std::string content_hash(const nlohmann::json& config, const nlohmann::json& corpus);

// On-disk layout of one loop run.
//   manifest.json  config.json  corpus.json
//   traces/<seed>.json (+ overflow PNGs)   errors/<seed>.json
//   annotations.jsonl  predictions.jsonl
class RunStore {
 public:
  explicit RunStore(fs::path root);

  const fs::path& root() const noexcept { return root_; }
  fs::path trace_path(const std::string& seed_id) const;
  fs::path error_path(const std::string& seed_id) const;
  fs::path manifest_path() const { return root_ / "manifest.json"; }
  fs::path annotations_path() const { return root_ / "annotations.jsonl"; }
  fs::path predictions_path() const { return root_ / "predictions.jsonl"; }

  bool has_trace(const std::string& seed_id) const;
  void write_trace(const LoopTrace& trace, std::size_t inline_limit) const;
  LoopTrace read_trace(const std::string& seed_id) const;
  std::vector<std::string> trace_ids() const;  // sorted
  std::vector<LoopTrace> read_traces() const;

  void write_error(const loop::SeedOutcome& outcome) const;
  void clear_error(const std::string& seed_id) const;
  std::vector<nlohmann::json> read_errors() const;

  bool has_manifest() const;
  nlohmann::json read_manifest() const;
  std::string manifest_hash() const;  // empty when there is no manifest

 private:
  fs::path root_;
};

// Seed ids become file names; rejects empty ids, path separators and dot names.
void check_seed_id(const std::string& seed_id);

}  // namespace biasloop::report
