#include "biasloop/report/config.hpp"

#include <fstream>
#include <functional>

#include "biasloop/core/error.hpp"

namespace biasloop::report {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::ConfigError, "config key '" + key + "': " + what);
}

template <typename T>
T as(const std::string& key, const json& value) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    bad(key, "unexpected value " + value.dump());
  }
}

double unit_interval(const std::string& key, const json& value, bool closed_top) {
  const auto v = as<double>(key, value);
  if (!(v > 0.0 && (closed_top ? v <= 1.0 : v < 1.0))) bad(key, "must lie in (0, 1" + std::string(closed_top ? "]" : ")"));
  return v;
}

int at_least(const std::string& key, const json& value, int low) {
  if (!value.is_number_integer()) bad(key, "expected an integer");
  const auto v = value.get<long long>();
  if (v < low) bad(key, "must be >= " + std::to_string(low));
  return static_cast<int>(v);
}

using Setter = std::function<void(RunConfig&, const std::string&, const json&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["run.experiment"] = [](RunConfig& c, const std::string& k, const json& v) { c.experiment = as<std::string>(k, v); };

    t["backend.kind"] = [](RunConfig& c, const std::string& k, const json& v) {
      const auto kind = as<std::string>(k, v);
      if (kind == "http")
        c.backend_kind = BackendKind::http;
      else if (kind == "synthetic")
        c.backend_kind = BackendKind::synthetic;
      else
        bad(k, "expected \"http\" or \"synthetic\"");
    };
    t["backend.base_url"] = [](RunConfig& c, const std::string& k, const json& v) {
      auto base = as<std::string>(k, v);
      while (!base.empty() && base.back() == '/') base.pop_back();
      for (auto cap : {adapters::Capability::generate, adapters::Capability::describe, adapters::Capability::embed,
                       adapters::Capability::saliency}) {
        c.backend.endpoints.try_emplace(cap, base + "/" + std::string(adapters::to_string(cap)));
      }
    };
    for (auto cap : {adapters::Capability::generate, adapters::Capability::describe, adapters::Capability::embed,
                     adapters::Capability::saliency}) {
      t["backend.endpoint." + std::string(adapters::to_string(cap))] = [cap](RunConfig& c, const std::string& k,
                                                                             const json& v) {
        c.backend.endpoints[cap] = as<std::string>(k, v);
      };
    }
    t["backend.auth_token_env"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.backend.auth_token_env = as<std::string>(k, v);
    };
    t["backend.timeout_seconds"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.backend.timeout_seconds = as<double>(k, v);
    };
    t["backend.max_retries"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.backend.retry.max_retries = at_least(k, v, 0);
    };
    t["backend.backoff_base_seconds"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.backend.retry.backoff_base_seconds = as<double>(k, v);
    };
    t["backend.concurrency_cap"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.backend.concurrency_cap = at_least(k, v, 1);
    };
    t["backend.params"] = [](RunConfig& c, const std::string& k, const json& v) {
      if (!v.is_object()) bad(k, "expected an object");
      c.backend.params = v;
    };
    t["backend.trace_wire"] = [](RunConfig& c, const std::string& k, const json& v) { c.backend.trace_wire = as<bool>(k, v); };

    t["loop.epsilon"] = [](RunConfig& c, const std::string& k, const json& v) { c.loop.epsilon = unit_interval(k, v, true); };
    t["loop.gamma"] = [](RunConfig& c, const std::string& k, const json& v) { c.loop.gamma = unit_interval(k, v, true); };
    t["loop.max_iters"] = [](RunConfig& c, const std::string& k, const json& v) { c.loop.max_iters = at_least(k, v, 1); };
    t["loop.single_pass"] = [](RunConfig& c, const std::string& k, const json& v) { c.single_pass = as<bool>(k, v); };
    t["loop.seed"] = [](RunConfig& c, const std::string& k, const json& v) { c.loop.random_seed = as<std::uint64_t>(k, v); };
    t["loop.parallelism"] = [](RunConfig& c, const std::string& k, const json& v) { c.parallelism = at_least(k, v, 1); };

    t["concept.kind"] = [](RunConfig& c, const std::string& k, const json& v) {
      try {
        c.concept_kind = concept_kind_from_string(as<std::string>(k, v));
      } catch (const Error& e) {
        bad(k, e.what());
      }
    };
    t["concept.labels"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.concept_labels = as<std::vector<std::string>>(k, v);
    };
    t["concept.seed_template"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.seed_template = as<std::string>(k, v);
    };

    t["demographics.schema"] = [](RunConfig& c, const std::string& k, const json& v) {
      const auto name = as<std::string>(k, v);
      if (name == "standard")
        c.schema = DemographicSchema::standard();
      else if (name == "skin_tone")
        c.schema = DemographicSchema::skin_tone();
      else
        bad(k, "expected \"standard\" or \"skin_tone\"");
    };

    t["stats.alpha"] = [](RunConfig& c, const std::string& k, const json& v) { c.alpha = unit_interval(k, v, false); };
    t["stats.exclude_unsure"] = [](RunConfig& c, const std::string& k, const json& v) { c.exclude_unsure = as<bool>(k, v); };
    t["stats.families"] = [](RunConfig& c, const std::string& k, const json& v) {
      if (!v.is_object()) bad(k, "expected {family: [experiment, ...]}");
      for (const auto& [family, members] : v.items())
        for (const auto& experiment : as<std::vector<std::string>>(k, members)) c.families[experiment] = family;
    };
    t["saliency.interpolation"] = [](RunConfig& c, const std::string& k, const json& v) {
      try {
        c.interpolation = saliency::interpolation_from_string(as<std::string>(k, v));
      } catch (const Error& e) {
        bad(k, e.what());
      }
    };
    t["store.inline_image_limit"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.inline_image_limit = static_cast<std::size_t>(at_least(k, v, 0));
    };

    t["synthetic.ethnicities"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.synthetic.ethnicities = as<std::vector<std::string>>(k, v);
    };
    t["synthetic.genders"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.synthetic.genders = as<std::vector<std::string>>(k, v);
    };
    t["synthetic.ages"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.synthetic.ages = as<std::vector<std::string>>(k, v);
    };
    t["synthetic.kernel"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.synthetic.kernel = as<std::vector<std::vector<double>>>(k, v);
    };
    t["synthetic.initial"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.synthetic.initial = as<std::vector<double>>(k, v);
    };
    t["synthetic.label_fidelity"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.synthetic.label_fidelity = as<double>(k, v);
    };
    t["synthetic.label_fidelity_by_gender"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.synthetic.label_fidelity_by_gender = as<std::map<std::string, double>>(k, v);
    };
    t["synthetic.noise_seed"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.synthetic.noise_seed = as<std::uint64_t>(k, v);
    };
    t["synthetic.image_size"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.synthetic.image_size = at_least(k, v, 4);
    };
    t["synthetic.heatmap_size"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.synthetic.heatmap_size = at_least(k, v, 1);
    };
    t["synthetic.embedding_noise"] = [](RunConfig& c, const std::string& k, const json& v) {
      c.synthetic.embedding_noise = as<double>(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

ConceptSpec RunConfig::concept_spec() const {
  const auto defaults = ConceptSpec::defaults_for(concept_kind);
  return ConceptSpec(concept_kind, concept_labels.empty() ? defaults.admissible_labels() : concept_labels,
                     seed_template.empty() ? defaults.seed_template() : seed_template);
}

LoopParams RunConfig::effective_loop() const {
  auto params = loop;
  if (single_pass) params.max_iters = 1;
  return params;
}

std::string RunConfig::family_of(const std::string& name) const {
  const auto hit = families.find(name);
  return hit == families.end() ? name : hit->second;
}

RunConfig parse_config(const json& document) {
  if (!document.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object of dotted keys");
  RunConfig config;
  config.source = document;
  std::map<Attribute, std::vector<std::string>> options;
  for (const auto& [key, value] : document.items()) {
    if (key.rfind("demographics.", 0) == 0 && key.size() > 21 && key.ends_with(".options")) {
      const auto name = key.substr(13, key.size() - 13 - 8);
      try {
        options[attribute_from_string(name)] = as<std::vector<std::string>>(key, value);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigError) throw;
        bad(key, e.what());
      }
      continue;
    }
    const auto hit = setters().find(key);
    if (hit == setters().end()) bad(key, "unknown key");
    hit->second(config, key, value);
  }

  try {
    if (!options.empty()) {
      std::array<AttributeVocabulary, 3> vocab{config.schema.vocabulary(Attribute::ethnicity),
                                               config.schema.vocabulary(Attribute::gender),
                                               config.schema.vocabulary(Attribute::age)};
      for (const auto& [attribute, listed] : options) {
        auto& v = vocab[static_cast<std::size_t>(attribute)];
        v.prompt_options = listed;
        v.labels = listed;
      }
      config.schema = DemographicSchema(vocab[0], vocab[1], vocab[2]);
    }
    config.synthetic.concept_spec = config.concept_spec();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  config.synthetic.schema = config.schema;
  if (config.experiment.empty()) config.experiment = std::string(to_string(config.concept_kind));

  if (config.backend_kind == BackendKind::http) {
    for (auto cap : {adapters::Capability::generate, adapters::Capability::describe, adapters::Capability::embed}) {
      if (!config.backend.endpoints.count(cap))
        throw Error(ErrorCode::ConfigError, "http backend needs backend.base_url or backend.endpoint." +
                                                std::string(adapters::to_string(cap)));
    }
  }
  config.backend.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config " + path.string());
  json document;
  try {
    document = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(document);
}

std::shared_ptr<adapters::Backend> make_backend(const RunConfig& config) {
  if (config.backend_kind == BackendKind::synthetic) {
    try {
      return adapters::make_synthetic_world(config.synthetic);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InvalidKernel) throw;
      throw Error(ErrorCode::ConfigError, std::string("synthetic backend: ") + e.what());
    }
  }
  return adapters::make_http_backend(config.backend);
}

}  // namespace biasloop::report
