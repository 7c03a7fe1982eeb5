#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biasloop/adapters/backend.hpp"
#include "biasloop/core/error.hpp"
#include "biasloop/core/labels.hpp"
#include "biasloop/core/loop_trace.hpp"

namespace biasloop::loop {

// Inner-product cosine clamped to [-1, 1]. Throws ZeroVector for an all-zero
// input and InvalidArgument for unequal or empty lengths.
double cosine(std::span<const double> u, std::span<const double> v);

// Text-seeded loop: im_0 from the concept's seed prompt, then describe/generate
// cycles until cos(d_t, d_{t-1}) > epsilon or max_iters cycles have run.
LoopTrace run_text_seeded(const ConceptSpec& spec, std::string_view label, const LoopParams& params,
                          adapters::Backend& backend, std::string seed_id = {});

// Image-seeded loop: the seed is described first (d_0 -> im_1), then cycles
// continue until cos(im_t, im_{t-1}) > gamma or max_iters cycles have run.
// `label` is the seed's ground-truth concept label, recorded for later scoring.
LoopTrace run_image_seeded(const Image& seed_image, const ConceptSpec& spec, std::string_view label,
                           const LoopParams& params, adapters::Backend& backend, std::string seed_id = {});

struct SimilarityPoint {
  std::size_t from = 0;  // position in the embedding sequence
  std::size_t to = 0;
  double similarity = 0.0;
};

// Consecutive-pair cosines over the trace's description embeddings (text) or
// image embeddings including the seed image (image). InsufficientData below 2.
std::vector<SimilarityPoint> similarity_series(const LoopTrace& trace, adapters::Modality mode);

// Per-seed stream derived from a run-level seed and the seed id.
std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view seed_id);

struct SeedSpec {
  std::string id;
  SeedKind kind = SeedKind::image;
  std::string label;
  std::optional<Image> image;  // required for image seeds
};

struct SeedOutcome {
  std::string id;
  std::optional<LoopTrace> trace;
  std::optional<ErrorCode> error_code;
  std::string error_message;
  std::optional<int> failed_iteration;
  double seconds = 0.0;
};

struct BatchOptions {
  int parallelism = 1;    // seeds in flight
  int max_in_flight = 4;  // backend requests in flight per capability
};

// Runs every seed, each with params.random_seed replaced by derive_seed(params.random_seed, id).
// Failures are captured per seed; the batch never aborts. `on_done` is called
// (serialized) as each seed finishes. Results come back in input order.
std::vector<SeedOutcome> run_batch(const std::vector<SeedSpec>& seeds, const ConceptSpec& spec,
                                   const LoopParams& params, adapters::Backend& backend, const BatchOptions& options,
                                   const std::function<void(const SeedOutcome&)>& on_done = {});

}  // namespace biasloop::loop
