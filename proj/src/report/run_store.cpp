#include "biasloop/report/run_store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "biasloop/adapters/codec.hpp"
#include "biasloop/core/error.hpp"

namespace biasloop::report {

using nlohmann::json;

namespace {

json image_to_json(const Image& image, const std::string& file_name, std::size_t inline_limit, const fs::path& dir) {
  if (image.png.size() <= inline_limit || dir.empty()) return {{"png_base64", adapters::base64_encode(image.png)}};
  const std::string bytes(image.png.begin(), image.png.end());
  write_text(dir / file_name, bytes);
  return {{"file", file_name}};
}

Image image_from_json(const json& value, const fs::path& dir) {
  if (value.contains("png_base64")) return Image{adapters::base64_decode(value.at("png_base64").get<std::string>())};
  if (value.contains("file")) {
    const auto text = read_text(dir / value.at("file").get<std::string>());
    return Image{std::vector<std::uint8_t>(text.begin(), text.end())};
  }
  throw Error(ErrorCode::ProtocolViolation, "image entry has neither png_base64 nor file");
}

json params_to_json(const LoopParams& p) {
  return {{"epsilon", p.epsilon}, {"gamma", p.gamma}, {"max_iters", p.max_iters}, {"random_seed", p.random_seed}};
}

LoopParams params_from_json(const json& j) {
  return {j.at("epsilon").get<double>(), j.at("gamma").get<double>(), j.at("max_iters").get<int>(),
          j.at("random_seed").get<std::uint64_t>()};
}

}  // namespace

json trace_to_json(const LoopTrace& trace, std::size_t inline_limit, const fs::path& overflow_dir) {
  json iterations = json::array();
  for (const auto& step : trace.iterations) {
    iterations.push_back({
        {"index", step.index},
        {"description", {{"text", step.description.text}, {"tokens", step.description.tokens},
                         {"embedding", step.description.embedding}}},
        {"image", image_to_json(step.image.image, trace.seed_id + "." + std::to_string(step.index) + ".png",
                                inline_limit, overflow_dir)},
        {"image_embedding", step.image.embedding},
        {"similarity_to_previous", step.similarity_to_previous ? json(*step.similarity_to_previous) : json(nullptr)},
    });
  }
  return {
      {"seed_id", trace.seed_id},
      {"seed_kind", to_string(trace.seed_kind)},
      {"concept_kind", to_string(trace.concept_kind)},
      {"seed_label", trace.seed_label},
      {"seed_prompt", trace.seed_prompt},
      {"seed_image", image_to_json(trace.seed_image.image, trace.seed_id + ".seed.png", inline_limit, overflow_dir)},
      {"seed_image_embedding", trace.seed_image.embedding},
      {"iterations", std::move(iterations)},
      {"termination", to_string(trace.termination)},
      {"params", params_to_json(trace.params)},
      {"image_count", trace.image_count()},
      {"description_count", trace.description_count()},
  };
}

LoopTrace trace_from_json(const json& document, const fs::path& base_dir) {
  try {
    LoopTrace trace;
    trace.seed_id = document.at("seed_id").get<std::string>();
    trace.seed_kind = seed_kind_from_string(document.at("seed_kind").get<std::string>());
    trace.concept_kind = concept_kind_from_string(document.at("concept_kind").get<std::string>());
    trace.seed_label = document.at("seed_label").get<std::string>();
    trace.seed_prompt = document.at("seed_prompt").get<std::string>();
    trace.seed_image.image = image_from_json(document.at("seed_image"), base_dir);
    trace.seed_image.embedding = document.at("seed_image_embedding").get<Embedding>();
    for (const auto& row : document.at("iterations")) {
      LoopIteration step;
      step.index = row.at("index").get<int>();
      const auto& d = row.at("description");
      step.description.text = d.at("text").get<std::string>();
      step.description.tokens = d.at("tokens").get<std::vector<std::string>>();
      step.description.embedding = d.at("embedding").get<Embedding>();
      step.image.image = image_from_json(row.at("image"), base_dir);
      step.image.embedding = row.at("image_embedding").get<Embedding>();
      if (const auto& s = row.at("similarity_to_previous"); !s.is_null()) step.similarity_to_previous = s.get<double>();
      trace.iterations.push_back(std::move(step));
    }
    trace.termination = termination_from_string(document.at("termination").get<std::string>());
    trace.params = params_from_json(document.at("params"));
    return trace;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProtocolViolation, std::string("malformed trace document: ") + e.what());
  }
}

json to_json(const AnnotationRecord& r) {
  return {{"unit_id", r.unit_id},
          {"experiment", r.experiment},
          {"label", r.label},
          {"stage", stats::to_string(r.stage)},
          {"ethnicity", r.profile.ethnicity()},
          {"gender", r.profile.gender()},
          {"age", r.profile.age()},
          {"flagged", r.flagged},
          {"raw", r.raw}};
}

AnnotationRecord annotation_from_json(const json& row, const DemographicSchema& schema) {
  try {
    AnnotationRecord r;
    r.unit_id = row.at("unit_id").get<std::string>();
    r.experiment = row.value("experiment", std::string());
    r.label = row.at("label").get<std::string>();
    r.stage = stats::stage_from_string(row.at("stage").get<std::string>());
    r.profile = DemographicProfile(schema, row.at("ethnicity").get<std::string>(), row.at("gender").get<std::string>(),
                                   row.at("age").get<std::string>());
    r.flagged = row.value("flagged", false);
    r.raw = row.value("raw", std::string());
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProtocolViolation, std::string("malformed annotation row: ") + e.what());
  }
}

json to_json(const PredictionRecord& r) {
  return {{"unit_id", r.unit_id},
          {"experiment", r.experiment},
          {"label", r.label},
          {"stage", stats::to_string(r.stage)},
          {"gender", r.gender},
          {"predicted", r.predicted ? json(*r.predicted) : json(nullptr)},
          {"correct", r.correct},
          {"text", r.text},
          {"tokens", r.tokens}};
}

PredictionRecord prediction_from_json(const json& row) {
  try {
    PredictionRecord r;
    r.unit_id = row.at("unit_id").get<std::string>();
    r.experiment = row.value("experiment", std::string());
    r.label = row.at("label").get<std::string>();
    r.stage = stats::stage_from_string(row.at("stage").get<std::string>());
    r.gender = row.at("gender").get<std::string>();
    if (const auto& p = row.at("predicted"); !p.is_null()) r.predicted = p.get<std::string>();
    r.correct = row.at("correct").get<bool>();
    r.text = row.value("text", std::string());
    r.tokens = row.value("tokens", std::vector<std::string>{});
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ProtocolViolation, std::string("malformed prediction row: ") + e.what());
  }
}

void write_text(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& document) { write_text(path, document.dump(2) + "\n"); }

std::vector<json> read_jsonl(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<json> rows;
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::IoError, path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::string out;
  for (const auto& row : rows) out += row.dump() + "\n";
  write_text(path, out);
}

std::string content_hash(const json& config, const json& corpus) {
  return adapters::git_blob_hash(config.dump() + "\n" + corpus.dump() + "\n");
}

void check_seed_id(const std::string& seed_id) {
  if (seed_id.empty() || seed_id == "." || seed_id == ".." || seed_id.find_first_of("/\\") != std::string::npos ||
      seed_id.find('\0') != std::string::npos)
    throw Error(ErrorCode::InvalidArgument, "seed id '" + seed_id + "' cannot be used as a file name");
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) {}

fs::path RunStore::trace_path(const std::string& seed_id) const {
  check_seed_id(seed_id);
  return root_ / "traces" / (seed_id + ".json");
}

fs::path RunStore::error_path(const std::string& seed_id) const {
  check_seed_id(seed_id);
  return root_ / "errors" / (seed_id + ".json");
}

bool RunStore::has_trace(const std::string& seed_id) const { return fs::exists(trace_path(seed_id)); }

void RunStore::write_trace(const LoopTrace& trace, std::size_t inline_limit) const {
  const auto path = trace_path(trace.seed_id);
  write_json(path, trace_to_json(trace, inline_limit, path.parent_path()));
}

LoopTrace RunStore::read_trace(const std::string& seed_id) const {
  const auto path = trace_path(seed_id);
  return trace_from_json(read_json(path), path.parent_path());
}

std::vector<std::string> RunStore::trace_ids() const {
  std::vector<std::string> ids;
  const auto dir = root_ / "traces";
  if (!fs::is_directory(dir)) return ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto& p = entry.path();
    // overflow images are <seed>.<n>.png; traces are <seed>.json
    if (entry.is_regular_file() && p.extension() == ".json") ids.push_back(p.stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<LoopTrace> RunStore::read_traces() const {
  std::vector<LoopTrace> traces;
  for (const auto& id : trace_ids()) traces.push_back(read_trace(id));
  return traces;
}

void RunStore::write_error(const loop::SeedOutcome& outcome) const {
  json row = {{"seed_id", outcome.id},
              {"code", outcome.error_code ? std::string(to_string(*outcome.error_code)) : std::string()},
              {"message", outcome.error_message},
              {"iteration", outcome.failed_iteration ? json(*outcome.failed_iteration) : json(nullptr)}};
  write_json(error_path(outcome.id), row);
}

void RunStore::clear_error(const std::string& seed_id) const {
  std::error_code ec;
  fs::remove(error_path(seed_id), ec);
}

std::vector<json> RunStore::read_errors() const {
  std::vector<json> rows;
  const auto dir = root_ / "errors";
  if (!fs::is_directory(dir)) return rows;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) rows.push_back(read_json(f));
  return rows;
}

bool RunStore::has_manifest() const { return fs::exists(manifest_path()); }

json RunStore::read_manifest() const { return read_json(manifest_path()); }

std::string RunStore::manifest_hash() const {
  if (!has_manifest()) return {};
  return read_manifest().value("content_hash", std::string());
}

}  // namespace biasloop::report
