#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasloop/adapters/http_backend.hpp"
#include "biasloop/adapters/synthetic_world.hpp"
#include "biasloop/core/labels.hpp"
#include "biasloop/core/loop_trace.hpp"
#include "biasloop/saliency/saliency.hpp"

namespace biasloop::report {

enum class BackendKind { http, synthetic };

// Flat document of dotted keys, e.g. {"loop.max_iters": 5, "concept.kind": "emotion"}.
// Unknown keys and mistyped values raise ConfigError.
struct RunConfig {
  std::string experiment;  // BH family key of this run; defaults to the concept kind
  BackendKind backend_kind = BackendKind::synthetic;
  adapters::BackendConfig backend;
  adapters::SyntheticWorldConfig synthetic;

  LoopParams loop;
  bool single_pass = false;
  int parallelism = 1;

  ConceptKind concept_kind = ConceptKind::emotion;
  std::vector<std::string> concept_labels;  // empty = defaults for the kind
  std::string seed_template;                // empty = default
  DemographicSchema schema = DemographicSchema::standard();

  double alpha = 0.01;
  bool exclude_unsure = false;  // drop pairs with "unsure" on either side from drift tables
  std::map<std::string, std::string> families;  // experiment -> BH family
  saliency::Interpolation interpolation = saliency::Interpolation::bilinear;

  std::size_t inline_image_limit = 64 * 1024;  // bytes of PNG embedded in a trace file

  nlohmann::json source = nlohmann::json::object();  // the document as read

  ConceptSpec concept_spec() const;
  LoopParams effective_loop() const;  // single_pass forces max_iters = 1
  std::string family_of(const std::string& experiment) const;
};

RunConfig parse_config(const nlohmann::json& document);
RunConfig load_config(const std::filesystem::path& path);

// Backend described by the config; --trace-wire may be forced on by the caller.
std::shared_ptr<adapters::Backend> make_backend(const RunConfig& config);

}  // namespace biasloop::report
