#include "biasloop/report/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <mutex>
#include <set>

#include <fmt/format.h>

#include "biasloop/adapters/codec.hpp"
#include "biasloop/adapters/prompts.hpp"
#include "biasloop/adapters/wire.hpp"
#include "biasloop/core/error.hpp"
#include "biasloop/core/hashing.hpp"
#include "biasloop/core/parallel.hpp"
#include "biasloop/report/format.hpp"

namespace biasloop::report {

using nlohmann::json;

namespace {

std::string hash_header(const std::string& source_hash) { return "# source_hash=" + source_hash + "\n"; }

std::vector<std::string> default_seed_labels(const ConceptSpec& spec) {
  std::vector<std::string> labels;
  for (const auto& l : spec.admissible_labels())
    if (l != kUnsure) labels.push_back(l);
  return labels;
}

std::string stage_key(const std::string& unit, stats::Stage stage) {
  return unit + "_" + std::string(stats::to_string(stage));
}

}  // namespace

// ---- corpus -----------------------------------------------------------------

Corpus synthetic_corpus(const adapters::SyntheticWorld& world, std::size_t count, SeedKind kind,
                        std::vector<std::string> labels, std::uint64_t seed) {
  const auto& spec = world.config().concept_spec;
  if (labels.empty()) labels = default_seed_labels(spec);
  for (auto& l : labels) {
    l = normalize_label(l);
    if (!spec.is_admissible(l)) throw Error(ErrorCode::VocabularyMismatch, "seed label '" + l + "' is not admissible");
  }
  Corpus corpus;
  corpus.document = {{"synthetic", {{"count", count}, {"kind", to_string(kind)}, {"labels", labels}, {"seed", seed}}}};
  for (std::size_t i = 0; i < count; ++i) {
    loop::SeedSpec s;
    s.id = fmt::format("seed-{:05d}", i);
    s.kind = kind;
    s.label = labels[i % labels.size()];
    if (kind == SeedKind::image) s.image = world.seed_image(s.label, mix(seed, i));
    corpus.seeds.push_back(std::move(s));
  }
  return corpus;
}

Corpus parse_corpus(const json& document, const fs::path& base_dir, const RunConfig& config) {
  try {
    if (document.contains("synthetic")) {
      const auto& s = document.at("synthetic");
      const adapters::SyntheticWorld world(config.synthetic);
      auto corpus = synthetic_corpus(world, s.at("count").get<std::size_t>(),
                                     seed_kind_from_string(s.value("kind", std::string("image"))),
                                     s.value("labels", std::vector<std::string>{}), s.value("seed", std::uint64_t{0}));
      corpus.document = document;
      return corpus;
    }
    const auto spec = config.concept_spec();
    Corpus corpus;
    corpus.document = document;
    std::set<std::string> ids;
    auto& rows = corpus.document.at("seeds");
    for (auto& row : rows) {
      loop::SeedSpec s;
      s.id = row.at("id").get<std::string>();
      check_seed_id(s.id);
      if (!ids.insert(s.id).second) throw Error(ErrorCode::ConfigError, "duplicate seed id '" + s.id + "'");
      s.label = normalize_label(row.at("label").get<std::string>());
      if (!spec.is_admissible(s.label))
        throw Error(ErrorCode::ConfigError, "seed '" + s.id + "' has label '" + s.label + "' outside the concept");
      s.kind = seed_kind_from_string(row.value("kind", std::string(row.contains("image") ? "image" : "text")));
      if (s.kind == SeedKind::image) {
        const auto text = read_text(base_dir / row.at("image").get<std::string>());
        s.image = Image{std::vector<std::uint8_t>(text.begin(), text.end())};
        row["image_hash"] = adapters::git_blob_hash(text);
      }
      corpus.seeds.push_back(std::move(s));
    }
    return corpus;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed corpus manifest: ") + e.what());
  }
}

Corpus load_corpus(const fs::path& path, const RunConfig& config) {
  json document;
  try {
    document = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, "corpus " + path.string() + " is not valid JSON: " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return parse_corpus(document, path.parent_path(), config);
}

// ---- loop run ----------------------------------------------------------------

LoopRunSummary cmd_loop_run(const RunConfig& config, const Corpus& corpus, adapters::Backend& backend,
                            const fs::path& run_dir, bool force) {
  const auto started = std::chrono::steady_clock::now();
  const RunStore store(run_dir);
  LoopRunSummary summary;
  summary.total = corpus.seeds.size();
  summary.content_hash = content_hash(config.source, corpus.document);

  if (store.has_manifest() && !force) {
    const auto previous = store.manifest_hash();
    if (previous != summary.content_hash)
      throw Error(ErrorCode::ConfigError, "run directory " + run_dir.string() + " holds run " + previous +
                                              ", not " + summary.content_hash + "; use --force to overwrite");
  }
  fs::create_directories(run_dir / "traces");
  write_json(run_dir / "config.json", config.source);
  write_json(run_dir / "corpus.json", corpus.document);

  std::vector<loop::SeedSpec> pending;
  for (const auto& seed : corpus.seeds) {
    if (!force && store.has_trace(seed.id))
      ++summary.skipped;
    else
      pending.push_back(seed);
  }

  std::vector<std::string> failed_ids;
  double max_seed = 0.0;
  double sum_seed = 0.0;
  loop::run_batch(pending, config.concept_spec(), config.effective_loop(), backend,
                  {config.parallelism, config.backend.concurrency_cap}, [&](const loop::SeedOutcome& outcome) {
                    sum_seed += outcome.seconds;
                    max_seed = std::max(max_seed, outcome.seconds);
                    if (outcome.trace) {
                      store.write_trace(*outcome.trace, config.inline_image_limit);
                      store.clear_error(outcome.id);
                      ++summary.completed;
                    } else {
                      store.write_error(outcome);
                      failed_ids.push_back(outcome.id);
                      ++summary.failed;
                    }
                  });
  std::sort(failed_ids.begin(), failed_ids.end());
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  const auto params = config.effective_loop();
  json manifest = {
      {"tool", "biasloop"},
      {"format", 1},
      {"content_hash", summary.content_hash},
      {"experiment", config.experiment},
      {"concept_kind", to_string(config.concept_kind)},
      {"backend", config.backend_kind == BackendKind::http ? "http" : "synthetic"},
      {"params",
       {{"epsilon", params.epsilon},
        {"gamma", params.gamma},
        {"max_iters", params.max_iters},
        {"single_pass", config.single_pass},
        {"seed", params.random_seed}}},
      {"seeds",
       {{"total", summary.total},
        {"run", pending.size()},
        {"completed", summary.completed},
        {"skipped", summary.skipped},
        {"failed", summary.failed},
        {"traces_on_disk", store.trace_ids().size()}}},
      {"failed_seeds", failed_ids},
      {"timings",
       {{"total_seconds", summary.seconds},
        {"mean_seed_seconds", pending.empty() ? 0.0 : sum_seed / static_cast<double>(pending.size())},
        {"max_seed_seconds", max_seed}}},
  };
  write_json(store.manifest_path(), manifest);
  return summary;
}

// ---- annotation --------------------------------------------------------------

UnitAnnotations annotate_trace(const LoopTrace& trace, adapters::Backend& backend, const DemographicSchema& schema,
                               const ConceptSpec& spec, const std::string& experiment, bool with_predictions) {
  const auto demographic_prompt = adapters::render_demographic_prompt(schema);
  const auto concept_prompt = adapters::render_description_prompt(spec, adapters::PromptStyle::constrained);
  UnitAnnotations out;
  for (const auto stage : {stats::Stage::before, stats::Stage::after}) {
    const Image& image = stage == stats::Stage::before ? trace.seed_image.image : trace.final_image().image;

    const auto answer = backend.describe_image(demographic_prompt, image);
    const auto parsed = adapters::parse_demographic_answer(answer.text, schema);
    out.annotations.push_back({trace.seed_id, experiment, trace.seed_label, stage, parsed.profile, parsed.flagged,
                               answer.text});
    if (!with_predictions) continue;

    auto described = backend.describe_image(concept_prompt, image);
    PredictionRecord p;
    p.unit_id = trace.seed_id;
    p.experiment = experiment;
    p.label = trace.seed_label;
    p.stage = stage;
    p.gender = parsed.profile.gender();
    p.text = std::move(described.text);
    p.tokens = described.tokens.empty() ? adapters::simple_tokenize(p.text) : std::move(described.tokens);
    std::optional<saliency::DecisionToken> token;
    try {
      token = saliency::select_decision_token(p.text, p.tokens, spec);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::AlignmentError) throw;
      p.tokens = adapters::simple_tokenize(p.text);
      token = saliency::select_decision_token(p.text, p.tokens, spec);
    }
    if (token) p.predicted = token->label;
    p.correct = p.predicted && *p.predicted == trace.seed_label;
    out.predictions.push_back(std::move(p));
  }
  return out;
}

AnnotateSummary cmd_annotate(const fs::path& run_dir, const RunConfig& config, adapters::Backend& backend) {
  const RunStore store(run_dir);
  const auto ids = store.trace_ids();
  if (ids.empty()) throw Error(ErrorCode::IoError, "no traces under " + run_dir.string() + "; run `loop run` first");
  const auto spec = config.concept_spec();

  std::vector<std::optional<UnitAnnotations>> results(ids.size());
  std::vector<std::string> errors(ids.size());
  parallel_for(ids.size(), config.parallelism, [&](std::size_t i) {
    try {
      results[i] = annotate_trace(store.read_trace(ids[i]), backend, config.schema, spec, config.experiment);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  AnnotateSummary summary;
  std::vector<json> annotations;
  std::vector<json> predictions;
  std::vector<json> failures;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!results[i]) {
      ++summary.failed;
      failures.push_back({{"unit_id", ids[i]}, {"message", errors[i]}});
      continue;
    }
    ++summary.units;
    for (const auto& a : results[i]->annotations) {
      if (a.flagged) ++summary.flagged;
      annotations.push_back(to_json(a));
    }
    for (const auto& p : results[i]->predictions) predictions.push_back(to_json(p));
  }
  write_jsonl(store.annotations_path(), annotations);
  write_jsonl(store.predictions_path(), predictions);
  const auto error_file = run_dir / "annotate_errors.jsonl";
  if (failures.empty()) {
    std::error_code ec;
    fs::remove(error_file, ec);
  } else {
    write_jsonl(error_file, failures);
  }
  return summary;
}

// ---- drift -------------------------------------------------------------------

std::vector<DriftRow> compute_drift(const std::vector<AnnotationRecord>& annotations, const DemographicSchema& schema,
                                    const RunConfig& config) {
  struct Pair {
    const DemographicProfile* before = nullptr;
    const DemographicProfile* after = nullptr;
  };
  std::map<std::pair<std::string, std::string>, std::map<std::string, Pair>> groups;
  for (const auto& a : annotations) {
    auto& pair = groups[{a.experiment, a.label}][a.unit_id];
    (a.stage == stats::Stage::before ? pair.before : pair.after) = &a.profile;
  }

  std::vector<DriftRow> rows;
  for (const auto& [key, units] : groups) {
    for (auto attribute : kAllAttributes) {
      std::vector<PairedObservation> observations;
      for (const auto& [unit, pair] : units) {
        if (!pair.before || !pair.after) continue;
        const auto& b = pair.before->get(attribute);
        const auto& a = pair.after->get(attribute);
        if (config.exclude_unsure && (b == kUnsure || a == kUnsure)) continue;
        observations.push_back({unit, b, a});
      }
      if (observations.empty()) continue;
      auto labels = schema.vocabulary(attribute).labels;
      if (config.exclude_unsure) std::erase(labels, std::string(kUnsure));
      auto table = build_paired_table(observations, labels);
      auto summary = stats::summarize_drift(table);
      rows.push_back({config.family_of(key.first), key.first, key.second, attribute, std::move(table),
                      std::move(summary), 1.0, false});
    }
  }

  std::map<std::string, std::vector<std::size_t>> families;
  for (std::size_t i = 0; i < rows.size(); ++i) families[rows[i].family].push_back(i);
  for (const auto& [family, members] : families) {
    std::vector<double> p;
    for (auto i : members) p.push_back(rows[i].summary.homogeneity.p_value);
    const auto adjusted = stats::bh_adjust(p, config.alpha);
    for (std::size_t j = 0; j < members.size(); ++j) {
      rows[members[j]].q_value = adjusted.q_values[j];
      rows[members[j]].significant = adjusted.significant[j];
    }
  }
  return rows;
}

std::string drift_csv(const std::vector<DriftRow>& rows, const std::string& source_hash) {
  std::string out = hash_header(source_hash);
  out += csv_row({"family", "experiment", "concept", "attribute", "n", "chi2", "df", "p", "q", "significant", "kappa",
                  "jaccard", "collapsed", "singular"});
  for (const auto& r : rows) {
    const auto& h = r.summary.homogeneity;
    std::string collapsed;
    for (const auto& c : h.collapsed_categories) collapsed += (collapsed.empty() ? "" : ";") + c;
    out += csv_row({r.family, r.experiment, r.concept_label, std::string(to_string(r.attribute)), std::to_string(h.n),
                    fmt_chi2(h.chi2), std::to_string(h.df), fmt_p(h.p_value), fmt_p(r.q_value),
                    r.significant ? "yes" : "no", r.summary.kappa ? fmt_score(*r.summary.kappa) : "n/a",
                    fmt_score(r.summary.jaccard), collapsed, h.singular ? "yes" : "no"});
  }
  return out;
}

std::string drift_distributions_csv(const std::vector<DriftRow>& rows, const std::string& source_hash) {
  std::string out = hash_header(source_hash);
  out += csv_row({"experiment", "concept", "attribute", "label", "before_count", "before_pct", "after_count", "after_pct"});
  for (const auto& r : rows) {
    const auto before = r.table.row_totals();
    const auto after = r.table.col_totals();
    const auto n = static_cast<double>(r.table.n());
    for (std::size_t i = 0; i < r.table.k(); ++i) {
      out += csv_row({r.experiment, r.concept_label, std::string(to_string(r.attribute)), r.table.labels()[i],
                      std::to_string(before[i]), fmt_percent(100.0 * static_cast<double>(before[i]) / n),
                      std::to_string(after[i]), fmt_percent(100.0 * static_cast<double>(after[i]) / n)});
    }
  }
  return out;
}

json drift_json(const std::vector<DriftRow>& rows, const std::string& source_hash, double alpha, bool exclude_unsure) {
  json out = {{"source_hash", source_hash},
              {"alpha", alpha},
              {"unsure", exclude_unsure ? "excluded" : "included"},
              {"rows", json::array()}};
  for (const auto& r : rows) {
    const auto& h = r.summary.homogeneity;
    json before = json::object();
    json after = json::object();
    for (std::size_t i = 0; i < r.summary.before.size(); ++i)
      before[r.summary.before.labels()[i]] = r.summary.before.probabilities()[i];
    for (std::size_t i = 0; i < r.summary.after.size(); ++i)
      after[r.summary.after.labels()[i]] = r.summary.after.probabilities()[i];
    out["rows"].push_back({{"family", r.family},
                           {"experiment", r.experiment},
                           {"concept", r.concept_label},
                           {"attribute", to_string(r.attribute)},
                           {"n", h.n},
                           {"chi2", h.chi2},
                           {"df", h.df},
                           {"p", h.p_value},
                           {"q", r.q_value},
                           {"significant", r.significant},
                           {"kappa", r.summary.kappa ? json(*r.summary.kappa) : json(nullptr)},
                           {"jaccard", r.summary.jaccard},
                           {"collapsed", h.collapsed_categories},
                           {"singular", h.singular},
                           {"labels", r.table.labels()},
                           {"table", r.table.counts()},
                           {"before", before},
                           {"after", after}});
  }
  return out;
}

namespace {

fs::path input_file(const fs::path& input, const char* name) {
  return fs::is_directory(input) ? input / name : input;
}

}  // namespace

std::string source_hash(const std::vector<fs::path>& inputs) {
  std::vector<std::string> parts;
  for (const auto& input : inputs) {
    const auto dir = fs::is_directory(input) ? input : input.parent_path();
    const RunStore store(dir.empty() ? fs::path(".") : dir);
    auto h = store.manifest_hash();
    if (h.empty()) h = fs::is_directory(input) ? adapters::git_blob_hash(input.string()) : adapters::git_blob_hash(read_text(input));
    parts.push_back(std::move(h));
  }
  if (parts.size() == 1) return parts.front();
  std::string joined;
  for (const auto& p : parts) joined += p + "\n";
  return adapters::git_blob_hash(joined);
}

std::vector<DriftRow> cmd_stats_drift(const std::vector<fs::path>& inputs, const RunConfig& config,
                                      const fs::path& out_dir) {
  std::vector<AnnotationRecord> annotations;
  for (const auto& input : inputs)
    for (const auto& row : read_jsonl(input_file(input, "annotations.jsonl")))
      annotations.push_back(annotation_from_json(row, config.schema));
  const auto rows = compute_drift(annotations, config.schema, config);
  const auto hash = source_hash(inputs);
  write_text(out_dir / "drift.csv", drift_csv(rows, hash));
  write_text(out_dir / "drift_distributions.csv", drift_distributions_csv(rows, hash));
  write_json(out_dir / "drift.json", drift_json(rows, hash, config.alpha, config.exclude_unsure));
  return rows;
}

// ---- parity ------------------------------------------------------------------

namespace {

int gender_rank(const std::string& g) {
  if (g == "male") return 0;
  if (g == "female") return 1;
  return 2;
}

const stats::GroupRate* find_rate(const stats::ParityResult& parity, const std::string& gender, stats::Stage stage) {
  for (const auto& r : parity.rates)
    if (r.gender == gender && r.stage == stage) return &r;
  return nullptr;
}

}  // namespace

std::vector<ParityBlock> compute_parity(const std::vector<PredictionRecord>& predictions) {
  std::map<std::pair<std::string, std::string>, std::map<std::tuple<int, int, std::string>, stats::GroupCount>> grouped;
  for (const auto& p : predictions) {
    const auto gender = normalize_label(p.gender);
    auto& count = grouped[{p.experiment, p.label}][{static_cast<int>(p.stage), gender_rank(gender), gender}];
    count.gender = gender;
    count.stage = p.stage;
    count.total += 1;
    count.correct += p.correct ? 1 : 0;
  }

  std::vector<ParityBlock> blocks;
  for (const auto& [key, counts] : grouped) {
    ParityBlock block;
    block.experiment = key.first;
    block.concept_label = key.second;
    std::vector<stats::LogisticCell> cells;
    for (const auto& [order, count] : counts) {
      block.counts.push_back(count);
      cells.push_back({count.stage, count.gender, count.correct, count.total - count.correct});
    }
    try {
      block.parity = stats::demographic_parity(block.counts);
    } catch (const Error& e) {
      block.error = e.what();
    }
    try {
      block.regression = stats::fit_logistic(cells);
    } catch (const Error& e) {
      block.error += (block.error.empty() ? "" : "; ") + std::string(e.what());
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::string parity_table(const std::vector<ParityBlock>& blocks, const std::string& source_hash, double alpha) {
  std::string out = hash_header(source_hash);
  for (const auto& b : blocks) {
    out += fmt::format("\n{} ({})\n", b.concept_label, b.experiment);
    out += fmt::format("{:<7} {:<8} {:>8} {:>8} {:>8} {:>12} {:>20}\n", "stage", "gender", "success", "failure", "total",
                       "success_pct", "dp_vs_male_pp");
    for (const auto& c : b.counts) {
      std::string pct = "n/a";
      std::string dp = "n/a";
      if (c.total > 0) pct = fmt_percent(stats::success_rate(c.correct, c.total));
      if (b.parity) {
        const auto* male = find_rate(*b.parity, "male", c.stage);
        const auto* self = find_rate(*b.parity, c.gender, c.stage);
        if (male && self) dp = fmt_percent(c.gender == "male" ? 0.0 : self->rate - male->rate);
      }
      out += fmt::format("{:<7} {:<8} {:>8} {:>8} {:>8} {:>12} {:>20}\n", stats::to_string(c.stage), c.gender,
                         c.correct, c.total - c.correct, c.total, pct, dp);
    }
    if (b.regression) {
      const auto& r = *b.regression;
      const auto line = [&](const char* name, const char* symbol, std::size_t j) {
        return fmt::format("{}: {} (log-odds) {}{}, OR {}, p {}\n", name, symbol, fmt_beta(r.coefficients[j]),
                           r.p_values[j] <= alpha ? " *" : "", fmt_odds(r.odds_ratios[j]), fmt_wald_p(r.p_values[j]));
      };
      out += line("Before vs After", "beta_before", 1);
      out += line("Male vs Female", "beta_male", 2);
      if (r.separation) out += "warning: separation, coefficients diverge\n";
    }
    if (!b.error.empty()) out += "note: " + b.error + "\n";
  }
  out += fmt::format(
      "\nlogit P(correct) = alpha + beta_before * 1[stage=before] + beta_male * 1[gender=male]; Wald p-values; "
      "* = significant at alpha = {}; genders other than male/female are excluded from the regression and DP.\n",
      alpha);
  return out;
}

std::string parity_csv(const std::vector<ParityBlock>& blocks, const std::string& source_hash) {
  std::string out = hash_header(source_hash);
  out += csv_row({"experiment", "concept", "stage", "gender", "success", "failure", "total", "success_pct",
                  "dp_vs_male_pp"});
  for (const auto& b : blocks) {
    for (const auto& c : b.counts) {
      std::string dp;
      if (b.parity) {
        const auto* male = find_rate(*b.parity, "male", c.stage);
        const auto* self = find_rate(*b.parity, c.gender, c.stage);
        if (male && self) dp = fmt_percent(c.gender == "male" ? 0.0 : self->rate - male->rate);
      }
      out += csv_row({b.experiment, b.concept_label, std::string(stats::to_string(c.stage)), c.gender,
                      std::to_string(c.correct), std::to_string(c.total - c.correct), std::to_string(c.total),
                      c.total > 0 ? fmt_percent(stats::success_rate(c.correct, c.total)) : "", dp});
    }
  }
  return out;
}

std::string regression_csv(const std::vector<ParityBlock>& blocks, const std::string& source_hash, double alpha) {
  std::string out = hash_header(source_hash);
  out += csv_row({"experiment", "concept", "term", "beta", "odds_ratio", "std_error", "p", "significant", "separation"});
  for (const auto& b : blocks) {
    if (!b.regression) continue;
    const auto& r = *b.regression;
    for (std::size_t j = 0; j < 3; ++j) {
      out += csv_row({b.experiment, b.concept_label, stats::RegressionResult::kTerms[j],
                      fmt::format("{:.6f}", r.coefficients[j]), fmt::format("{:.6f}", r.odds_ratios[j]),
                      fmt::format("{:.6f}", r.std_errors[j]), fmt::format("{:.6g}", r.p_values[j]),
                      r.p_values[j] <= alpha ? "yes" : "no", r.separation ? "yes" : "no"});
    }
  }
  return out;
}

std::vector<ParityBlock> cmd_stats_parity(const std::vector<fs::path>& inputs, const RunConfig& config,
                                          const fs::path& out_dir) {
  std::vector<PredictionRecord> predictions;
  for (const auto& input : inputs)
    for (const auto& row : read_jsonl(input_file(input, "predictions.jsonl")))
      predictions.push_back(prediction_from_json(row));
  const auto blocks = compute_parity(predictions);
  const auto hash = source_hash(inputs);
  write_text(out_dir / "parity.txt", parity_table(blocks, hash, config.alpha));
  write_text(out_dir / "parity.csv", parity_csv(blocks, hash));
  write_text(out_dir / "regression.csv", regression_csv(blocks, hash, config.alpha));
  return blocks;
}

// ---- saliency ----------------------------------------------------------------

RegionSet parse_region_file(const json& document) {
  try {
    const int height = document.at("height").get<int>();
    const int width = document.at("width").get<int>();
    const auto box = [&](const char* name) -> std::optional<Box> {
      if (!document.contains(name) || document.at(name).is_null()) return std::nullopt;
      const auto& b = document.at(name);
      return Box{b.at("x").get<int>(), b.at("y").get<int>(), b.at("w").get<int>(), b.at("h").get<int>()};
    };
    std::optional<BinaryMask> hair;
    if (document.contains("hair") && !document.at("hair").is_null()) {
      std::vector<MaskRun> runs;
      for (const auto& run : document.at("hair")) runs.push_back({run.at(0).get<int>(), run.at(1).get<int>(), run.at(2).get<int>()});
      hair = BinaryMask::from_runs(height, width, runs);
    }
    return saliency::build_regions(box("face"), hair, box("body"), height, width);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::GeometryError, std::string("malformed region file: ") + e.what());
  }
}

SaliencyReport cmd_saliency(const fs::path& run_dir, const fs::path& regions_dir, const fs::path& heatmaps_dir,
                            const RunConfig& config, adapters::Backend* backend, const fs::path& out_dir) {
  const RunStore store(run_dir);
  if (!fs::exists(store.predictions_path()))
    throw Error(ErrorCode::IoError, "no predictions under " + run_dir.string() + "; run `annotate` first");
  std::vector<PredictionRecord> predictions;
  for (const auto& row : read_jsonl(store.predictions_path())) predictions.push_back(prediction_from_json(row));
  const auto spec = config.concept_spec();
  const auto prompt = adapters::render_description_prompt(spec, adapters::PromptStyle::constrained);

  SaliencyReport report;
  report.rows.resize(predictions.size());
  parallel_for(predictions.size(), config.parallelism, [&](std::size_t i) {
    const auto& p = predictions[i];
    auto& row = report.rows[i];
    row.unit_id = p.unit_id;
    row.experiment = p.experiment;
    row.concept_label = p.label;
    row.stage = p.stage;
    try {
      row.token = saliency::select_decision_token(p.text, p.tokens, spec);
      if (!row.token) {
        row.excluded = "no admissible label token";
        return;
      }
      const auto key = stage_key(p.unit_id, p.stage);
      const auto region_file = regions_dir / (key + ".json");
      if (!fs::exists(region_file)) {
        row.excluded = "no region file";
        return;
      }
      const auto regions = parse_region_file(read_json(region_file));

      const auto heatmap_file = heatmaps_dir / (key + ".json");
      std::optional<Heatmap> heatmap;
      if (fs::exists(heatmap_file)) {
        heatmap = adapters::wire::heatmap_from_json(read_json(heatmap_file));
      } else if (backend) {
        const auto trace = store.read_trace(p.unit_id);
        const auto& image = p.stage == stats::Stage::before ? trace.seed_image.image : trace.final_image().image;
        heatmap = backend->fetch_saliency(image, prompt, row.token->index);
        write_json(heatmap_file, adapters::wire::heatmap_to_json(*heatmap));
      } else {
        row.excluded = "no heatmap";
        return;
      }
      const auto resized = saliency::upsample(*heatmap, regions.height(), regions.width(), config.interpolation);
      row.shares = saliency::region_shares(resized, regions);
    } catch (const std::exception& e) {
      row.excluded = e.what();
    }
  });

  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < report.rows.size(); ++i)
    if (report.rows[i].shares) groups[{report.rows[i].experiment, report.rows[i].concept_label}].push_back(i);
  for (const auto& [key, members] : groups) {
    // The most common region set defines the group; images with other sets are excluded.
    std::map<std::vector<Region>, std::size_t> tally;
    for (auto i : members) ++tally[report.rows[i].shares->regions_present];
    const auto modal = std::max_element(tally.begin(), tally.end(),
                                        [](const auto& a, const auto& b) { return a.second < b.second; })->first;
    std::vector<saliency::RegionShares> shares;
    for (auto i : members) {
      auto& row = report.rows[i];
      if (row.shares->regions_present == modal) {
        shares.push_back(*row.shares);
      } else {
        row.excluded = "RegionSetMismatch: regions present differ from the concept's majority set";
        row.shares.reset();
      }
    }
    report.groups.push_back({key.first, key.second, saliency::aggregate_corpus(shares)});
  }

  const auto hash = source_hash({run_dir});
  std::string text = hash_header(hash);
  std::string summary_csv = hash_header(hash) + csv_row({"experiment", "concept", "region", "mean", "std", "n"});
  json doc = {{"source_hash", hash}, {"interpolation", saliency::to_string(config.interpolation)},
              {"std", "population"}, {"groups", json::array()}, {"images", json::array()}};
  for (const auto& g : report.groups) {
    text += fmt::format("\n{} ({}), N={}\n", g.concept_label, g.experiment, g.summary.n);
    text += saliency::format_summary(g.summary);
    json regions = json::object();
    for (auto region : g.summary.regions) {
      const auto& s = g.summary.stat(region);
      summary_csv += csv_row({g.experiment, g.concept_label, std::string(to_string(region)), fmt::format("{:.6f}", s.mean),
                              fmt::format("{:.6f}", s.std), std::to_string(g.summary.n)});
      regions[std::string(to_string(region))] = {{"mean", s.mean}, {"std", s.std}};
    }
    doc["groups"].push_back({{"experiment", g.experiment}, {"concept", g.concept_label}, {"n", g.summary.n},
                             {"regions", regions}});
  }

  std::string images_csv = hash_header(hash) + csv_row({"unit_id", "stage", "experiment", "concept", "token_index",
                                                        "word", "hair", "face", "body", "background"});
  std::string excluded_csv = hash_header(hash) + csv_row({"unit_id", "stage", "experiment", "concept", "reason"});
  for (const auto& row : report.rows) {
    const std::string stage(stats::to_string(row.stage));
    if (row.shares) {
      std::vector<std::string> fields{row.unit_id, stage, row.experiment, row.concept_label,
                                      std::to_string(row.token->index), row.token->word};
      for (auto region : kAllRegions) {
        const bool present = std::find(row.shares->regions_present.begin(), row.shares->regions_present.end(), region) !=
                             row.shares->regions_present.end();
        fields.push_back(present ? fmt::format("{:.6f}", row.shares->share(region)) : "");
      }
      images_csv += csv_row(fields);
    } else {
      excluded_csv += csv_row({row.unit_id, stage, row.experiment, row.concept_label, row.excluded});
    }
    doc["images"].push_back({{"unit_id", row.unit_id},
                             {"stage", stage},
                             {"token_index", row.token ? json(row.token->index) : json(nullptr)},
                             {"excluded", row.excluded}});
  }
  write_text(out_dir / "saliency_summary.txt", text);
  write_text(out_dir / "saliency_summary.csv", summary_csv);
  write_text(out_dir / "saliency_images.csv", images_csv);
  write_text(out_dir / "saliency_excluded.csv", excluded_csv);
  write_json(out_dir / "saliency.json", doc);
  return report;
}

// ---- consolidated report -----------------------------------------------------

json cmd_report(const fs::path& run_dir, const RunConfig& config, const fs::path& out_dir) {
  const RunStore store(run_dir);
  const auto hash = source_hash({run_dir});
  const auto traces = store.read_traces();

  std::string loops_csv = hash_header(hash) + csv_row({"seed_id", "seed_kind", "label", "iterations", "termination",
                                                       "image_count", "description_count"});
  std::string similarity_csv = hash_header(hash) + csv_row({"seed_id", "modality", "from", "to", "similarity"});
  std::size_t converged = 0;
  double iterations = 0.0;
  for (const auto& t : traces) {
    loops_csv += csv_row({t.seed_id, std::string(to_string(t.seed_kind)), t.seed_label, std::to_string(t.iterations.size()),
                          std::string(to_string(t.termination)), std::to_string(t.image_count()),
                          std::to_string(t.description_count())});
    if (t.termination == Termination::converged) ++converged;
    iterations += static_cast<double>(t.iterations.size());
    for (auto modality : {adapters::Modality::text, adapters::Modality::image}) {
      try {
        for (const auto& point : loop::similarity_series(t, modality))
          similarity_csv += csv_row({t.seed_id, std::string(adapters::to_string(modality)), std::to_string(point.from),
                                     std::to_string(point.to), fmt::format("{:.6f}", point.similarity)});
      } catch (const Error& e) {
        if (e.code() != ErrorCode::InsufficientData) throw;
      }
    }
  }

  json doc = {{"source_hash", hash},
              {"experiment", config.experiment},
              {"loops",
               {{"traces", traces.size()},
                {"converged", converged},
                {"max_iterations", traces.size() - converged},
                {"mean_iterations", traces.empty() ? 0.0 : iterations / static_cast<double>(traces.size())}}},
              {"errors", store.read_errors()}};
  std::string text = hash_header(hash);
  text += fmt::format("experiment: {}\nloops: {} traces, {} converged, {} at max_iters, mean iterations {:.2f}\n",
                      config.experiment, traces.size(), converged, traces.size() - converged,
                      traces.empty() ? 0.0 : iterations / static_cast<double>(traces.size()));
  text += fmt::format("failed seeds: {}\n", doc["errors"].size());

  std::string distributions_csv =
      hash_header(hash) + csv_row({"experiment", "concept", "attribute", "stage", "label", "count", "percent"});
  if (fs::exists(store.annotations_path())) {
    std::map<std::tuple<std::string, std::string, int, int, std::string>, std::uint64_t> counts;
    std::map<std::tuple<std::string, std::string, int, int>, std::uint64_t> totals;
    for (const auto& row : read_jsonl(store.annotations_path())) {
      const auto a = annotation_from_json(row, config.schema);
      for (auto attribute : kAllAttributes) {
        for (const std::string& concept_label : {a.label, std::string("all")}) {
          ++counts[{a.experiment, concept_label, static_cast<int>(attribute), static_cast<int>(a.stage), a.profile.get(attribute)}];
          ++totals[{a.experiment, concept_label, static_cast<int>(attribute), static_cast<int>(a.stage)}];
        }
      }
    }
    for (const auto& [key, count] : counts) {
      const auto& [experiment, concept_label, attribute, stage, label] = key;
      const auto total = totals[{experiment, concept_label, attribute, stage}];
      distributions_csv += csv_row({experiment, concept_label, std::string(to_string(static_cast<Attribute>(attribute))),
                                    std::string(stats::to_string(static_cast<stats::Stage>(stage))), label,
                                    std::to_string(count),
                                    fmt_percent(100.0 * static_cast<double>(count) / static_cast<double>(total))});
    }
  }

  for (const auto& [name, file] : {std::pair{"drift", "drift.json"}, std::pair{"saliency", "saliency.json"}}) {
    for (const auto& dir : {out_dir, run_dir}) {
      if (fs::exists(dir / file)) {
        doc[name] = read_json(dir / file);
        break;
      }
    }
  }
  if (doc.contains("drift")) {
    text += fmt::format("\ndrift (chi2, df, p, q, kappa, jaccard; \"unsure\" {})\n",
                        doc["drift"].value("unsure", std::string("included")));
    for (const auto& r : doc["drift"]["rows"]) {
      text += fmt::format("  {} / {} / {}: N={} chi2={} df={} p={} q={}{} kappa={} J={}\n",
                          r["experiment"].get<std::string>(), r["concept"].get<std::string>(),
                          r["attribute"].get<std::string>(), r["n"].get<std::uint64_t>(), fmt_chi2(r["chi2"].get<double>()),
                          r["df"].get<int>(), fmt_p(r["p"].get<double>()), fmt_p(r["q"].get<double>()),
                          r["significant"].get<bool>() ? " *" : "",
                          r["kappa"].is_null() ? std::string("n/a") : fmt_score(r["kappa"].get<double>()),
                          fmt_score(r["jaccard"].get<double>()));
    }
  }
  for (const auto& [title, file] : {std::pair{"parity", "parity.txt"}, std::pair{"saliency", "saliency_summary.txt"}}) {
    for (const auto& dir : {out_dir, run_dir}) {
      if (fs::exists(dir / file)) {
        auto body = read_text(dir / file);
        if (const auto nl = body.find('\n'); body.rfind("# ", 0) == 0 && nl != std::string::npos) body.erase(0, nl + 1);
        text += fmt::format("\n{}\n{}", title, body);
        break;
      }
    }
  }

  write_text(out_dir / "loops.csv", loops_csv);
  write_text(out_dir / "similarity.csv", similarity_csv);
  write_text(out_dir / "distributions.csv", distributions_csv);
  write_text(out_dir / "report.txt", text);
  write_json(out_dir / "report.json", doc);
  return doc;
}

}  // namespace biasloop::report
