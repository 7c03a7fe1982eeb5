#include "biasloop/loop/loop_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>

#include "biasloop/adapters/http_backend.hpp"
#include "biasloop/adapters/prompts.hpp"
#include "biasloop/core/hashing.hpp"
#include "biasloop/core/parallel.hpp"

namespace biasloop::loop {

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.empty() || u.size() != v.size())
    throw Error(ErrorCode::InvalidArgument, "cosine needs equal, nonzero lengths (" + std::to_string(u.size()) +
                                                " vs " + std::to_string(v.size()) + ")");
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of an all-zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

namespace {

enum class Criterion { text, image };

template <typename Call>
auto at_iteration(int iteration, Call&& call) -> decltype(call()) {
  try {
    return call();
  } catch (const BackendUnavailable& e) {
    throw BackendUnavailable(e.what(), iteration);
  }
}

// Shared body of both loop variants once im_0 is known.
void run_cycles(LoopTrace& trace, const ConceptSpec& spec, adapters::Backend& backend, Criterion criterion) {
  const auto& params = trace.params;
  if (params.max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");
  const double threshold = criterion == Criterion::text ? params.epsilon : params.gamma;
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "convergence threshold must lie in (0, 1]");

  const auto prompt = adapters::render_description_prompt(spec, adapters::PromptStyle::loop);
  trace.termination = Termination::max_iterations;

  for (int t = 1; t <= params.max_iters; ++t) {
    const Image& previous = trace.iterations.empty() ? trace.seed_image.image : trace.iterations.back().image.image;

    auto description = at_iteration(t, [&] { return backend.describe_image(prompt, previous); });
    if (description.text.find_first_not_of(" \t\r\n") == std::string::npos)
      throw Error(ErrorCode::DegenerateOutput, "describer returned an empty description at iteration " + std::to_string(t));

    LoopIteration step;
    step.index = t;
    step.description.embedding = at_iteration(t, [&] { return backend.embed(description.text); });
    step.image.image = at_iteration(t, [&] { return backend.generate_image(description.text, mix(params.random_seed, t)); });
    step.image.embedding = at_iteration(t, [&] { return backend.embed(step.image.image); });
    step.description.text = std::move(description.text);
    step.description.tokens = std::move(description.tokens);

    if (!trace.iterations.empty()) {
      const auto& before = trace.iterations.back();
      step.similarity_to_previous = criterion == Criterion::text
                                        ? cosine(step.description.embedding, before.description.embedding)
                                        : cosine(step.image.embedding, before.image.embedding);
    }
    const bool converged = step.similarity_to_previous && *step.similarity_to_previous > threshold;
    trace.iterations.push_back(std::move(step));
    if (converged) {
      trace.termination = Termination::converged;
      break;
    }
  }
}

}  // namespace

LoopTrace run_text_seeded(const ConceptSpec& spec, std::string_view label, const LoopParams& params,
                          adapters::Backend& backend, std::string seed_id) {
  LoopTrace trace;
  trace.seed_id = std::move(seed_id);
  trace.seed_kind = SeedKind::text;
  trace.concept_kind = spec.kind();
  trace.seed_label = normalize_label(label);
  trace.seed_prompt = spec.seed_prompt(label);
  trace.params = params;
  if (params.max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");

  trace.seed_image.image = at_iteration(0, [&] { return backend.generate_image(trace.seed_prompt, mix(params.random_seed, 0)); });
  trace.seed_image.embedding = at_iteration(0, [&] { return backend.embed(trace.seed_image.image); });
  run_cycles(trace, spec, backend, Criterion::text);
  return trace;
}

LoopTrace run_image_seeded(const Image& seed_image, const ConceptSpec& spec, std::string_view label,
                           const LoopParams& params, adapters::Backend& backend, std::string seed_id) {
  LoopTrace trace;
  trace.seed_id = std::move(seed_id);
  trace.seed_kind = SeedKind::image;
  trace.concept_kind = spec.kind();
  trace.seed_label = normalize_label(label);
  trace.params = params;
  if (params.max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");

  trace.seed_image.image = seed_image;
  trace.seed_image.embedding = at_iteration(0, [&] { return backend.embed(seed_image); });
  run_cycles(trace, spec, backend, Criterion::image);
  return trace;
}

std::vector<SimilarityPoint> similarity_series(const LoopTrace& trace, adapters::Modality mode) {
  std::vector<const Embedding*> sequence;
  if (mode == adapters::Modality::text) {
    for (const auto& step : trace.iterations)
      if (!step.description.embedding.empty()) sequence.push_back(&step.description.embedding);
  } else {
    if (!trace.seed_image.embedding.empty()) sequence.push_back(&trace.seed_image.embedding);
    for (const auto& step : trace.iterations)
      if (!step.image.embedding.empty()) sequence.push_back(&step.image.embedding);
  }
  if (sequence.size() < 2)
    throw Error(ErrorCode::InsufficientData, "need at least 2 " + std::string(adapters::to_string(mode)) +
                                                 " embeddings, trace has " + std::to_string(sequence.size()));
  std::vector<SimilarityPoint> series;
  for (std::size_t i = 1; i < sequence.size(); ++i) series.push_back({i - 1, i, cosine(*sequence[i - 1], *sequence[i])});
  return series;
}

std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view seed_id) { return mix(run_seed, fnv1a(seed_id)); }

std::vector<SeedOutcome> run_batch(const std::vector<SeedSpec>& seeds, const ConceptSpec& spec,
                                   const LoopParams& params, adapters::Backend& backend, const BatchOptions& options,
                                   const std::function<void(const SeedOutcome&)>& on_done) {
  // Non-owning handle; the caller's backend outlives the batch.
  std::shared_ptr<adapters::Backend> borrowed(&backend, [](adapters::Backend*) {});
  adapters::ThrottledBackend throttled(borrowed, std::max(1, options.max_in_flight));

  std::vector<SeedOutcome> outcomes(seeds.size());
  std::mutex report_mutex;

  parallel_for(seeds.size(), options.parallelism, [&](std::size_t i) {
    const auto& seed = seeds[i];
    auto& outcome = outcomes[i];
    outcome.id = seed.id;
    auto seed_params = params;
    seed_params.random_seed = derive_seed(params.random_seed, seed.id);
    const auto started = std::chrono::steady_clock::now();
    try {
      if (seed.kind == SeedKind::text) {
        outcome.trace = run_text_seeded(spec, seed.label, seed_params, throttled, seed.id);
      } else {
        if (!seed.image) throw Error(ErrorCode::InvalidArgument, "image seed '" + seed.id + "' has no image");
        outcome.trace = run_image_seeded(*seed.image, spec, seed.label, seed_params, throttled, seed.id);
      }
    } catch (const BackendUnavailable& e) {
      outcome.error_code = e.code();
      outcome.error_message = e.what();
      outcome.failed_iteration = e.iteration();
    } catch (const Error& e) {
      outcome.error_code = e.code();
      outcome.error_message = e.what();
    }
    outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (on_done) {
      std::lock_guard lock(report_mutex);
      on_done(outcome);
    }
  });
  return outcomes;
}

}  // namespace biasloop::loop
