#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "biasloop/adapters/wire_server.hpp"
#include "biasloop/core/error.hpp"
#include "biasloop/report/config.hpp"
#include "biasloop/report/pipeline.hpp"

namespace fs = std::filesystem;
using namespace biasloop;

namespace {

struct Globals {
  std::string config;
  std::string out;
  bool force = false;
  bool trace_wire = false;
  std::optional<std::uint64_t> seed;
};

// --config wins; otherwise the config.json stored in `run_dir`; otherwise defaults.
report::RunConfig resolve_config(const Globals& g, const fs::path& run_dir = {}, bool single_pass = false) {
  nlohmann::json document = nlohmann::json::object();
  if (!g.config.empty())
    document = report::load_config(g.config).source;
  else if (!run_dir.empty() && fs::exists(run_dir / "config.json"))
    document = report::read_json(run_dir / "config.json");
  if (g.seed) document["loop.seed"] = *g.seed;
  if (g.trace_wire) document["backend.trace_wire"] = true;
  if (single_pass) document["loop.single_pass"] = true;
  return report::parse_config(document);
}

fs::path out_or(const Globals& g, const fs::path& fallback) { return g.out.empty() ? fallback : fs::path(g.out); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit demographic drift in image-generation / image-description loops"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "flat JSON config of dotted keys");
  app.add_option("--out", g.out, "output directory");
  app.add_flag("--force", g.force, "redo seeds that already have traces");
  app.add_flag("--trace-wire", g.trace_wire, "log backend requests to stderr");
  app.add_option("--seed", g.seed, "run-level random seed (overrides loop.seed)");

  auto* loop_cmd = app.add_subcommand("loop", "describe/generate loops");
  loop_cmd->require_subcommand(1);
  auto* loop_run = loop_cmd->add_subcommand("run", "run one loop per seed and persist traces");
  std::string corpus_path;
  loop_run->add_option("--corpus", corpus_path, "corpus manifest (JSON)")->required();
  bool single_pass = false;
  loop_run->add_flag("--single-pass", single_pass, "exactly one describe/generate cycle per seed");

  auto* annotate = app.add_subcommand("annotate", "demographic answers and concept predictions for first/last images");
  std::string run_dir;
  annotate->add_option("run_dir", run_dir, "run directory")->required();

  auto* sal = app.add_subcommand("saliency", "region activation shares per concept");
  std::string regions_dir;
  std::string heatmaps_dir;
  bool fetch = false;
  sal->add_option("run_dir", run_dir, "run directory")->required();
  sal->add_option("--regions", regions_dir, "directory of <unit>_<stage>.json region files")->required();
  sal->add_option("--heatmaps", heatmaps_dir, "directory of <unit>_<stage>.json heatmaps");
  sal->add_flag("--fetch", fetch, "fetch missing heatmaps from the backend");

  auto* stats_cmd = app.add_subcommand("stats", "statistics over annotated runs");
  stats_cmd->require_subcommand(1);
  std::vector<std::string> inputs;
  auto* drift = stats_cmd->add_subcommand("drift", "marginal homogeneity, kappa and Jaccard per concept x attribute");
  drift->add_option("inputs", inputs, "run directories or annotations.jsonl files")->required();
  auto* parity = stats_cmd->add_subcommand("parity", "success rates, demographic parity and logistic regression");
  parity->add_option("inputs", inputs, "run directories or predictions.jsonl files")->required();

  auto* rep = app.add_subcommand("report", "consolidated report and plot-ready CSVs");
  rep->add_option("run_dir", run_dir, "run directory")->required();

  auto* serve = app.add_subcommand("serve-synthetic", "serve the synthetic world over the HTTP protocol");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);

  try {
    if (loop_run->parsed()) {
      if (g.out.empty()) throw Error(ErrorCode::ConfigError, "loop run needs --out");
      const auto config = resolve_config(g, {}, single_pass);
      const auto corpus = report::load_corpus(corpus_path, config);
      const auto backend = report::make_backend(config);
      const auto s = report::cmd_loop_run(config, corpus, *backend, g.out, g.force);
      fmt::print("{} seeds: {} run, {} skipped, {} failed ({:.1f}s); manifest {}\n", s.total, s.completed + s.failed,
                 s.skipped, s.failed, s.seconds, s.content_hash);
    } else if (annotate->parsed()) {
      const auto config = resolve_config(g, run_dir);
      const auto backend = report::make_backend(config);
      const auto s = report::cmd_annotate(run_dir, config, *backend);
      fmt::print("annotated {} units ({} flagged answers, {} failed)\n", s.units, s.flagged, s.failed);
    } else if (sal->parsed()) {
      const auto config = resolve_config(g, run_dir);
      std::shared_ptr<adapters::Backend> backend;
      if (fetch) backend = report::make_backend(config);
      const fs::path heatmaps = heatmaps_dir.empty() ? fs::path(run_dir) / "heatmaps" : fs::path(heatmaps_dir);
      const auto r = report::cmd_saliency(run_dir, regions_dir, heatmaps, config, backend.get(), out_or(g, run_dir));
      std::size_t excluded = 0;
      for (const auto& row : r.rows) excluded += row.shares ? 0 : 1;
      fmt::print("{} images, {} excluded, {} concept groups\n", r.rows.size(), excluded, r.groups.size());
    } else if (drift->parsed()) {
      const auto config = resolve_config(g, fs::is_directory(inputs.front()) ? fs::path(inputs.front()) : fs::path());
      const std::vector<fs::path> paths(inputs.begin(), inputs.end());
      const auto out = out_or(g, fs::is_directory(paths.front()) ? paths.front() : paths.front().parent_path());
      const auto rows = report::cmd_stats_drift(paths, config, out);
      fmt::print("{} drift rows written to {}\n", rows.size(), out.string());
    } else if (parity->parsed()) {
      const auto config = resolve_config(g, fs::is_directory(inputs.front()) ? fs::path(inputs.front()) : fs::path());
      const std::vector<fs::path> paths(inputs.begin(), inputs.end());
      const auto out = out_or(g, fs::is_directory(paths.front()) ? paths.front() : paths.front().parent_path());
      const auto blocks = report::cmd_stats_parity(paths, config, out);
      fmt::print("{} parity blocks written to {}\n", blocks.size(), out.string());
    } else if (rep->parsed()) {
      const auto config = resolve_config(g, run_dir);
      const auto out = out_or(g, run_dir);
      report::cmd_report(run_dir, config, out);
      std::cout << report::read_text(out / "report.txt");
    } else if (serve->parsed()) {
      const auto config = resolve_config(g);
      adapters::WireServer server(adapters::make_synthetic_world(config.synthetic));
      fmt::print("serving synthetic world on http://{}:{}\n", host, port);
      std::fflush(stdout);
      server.run(host, port);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
