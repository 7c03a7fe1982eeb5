#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "biasloop/core/labels.hpp"

namespace biasloop {

// Encoded PNG bytes; the loop never decodes images itself.
struct Image {
  std::vector<std::uint8_t> png;
  bool operator==(const Image&) const = default;
};

using Embedding = std::vector<double>;

// Describer output. `tokens` is the describer's decoded tokenization when the
// service provides one (needed to anchor saliency on a token position).
struct Description {
  std::string text;
  std::vector<std::string> tokens;
  bool operator==(const Description&) const = default;
};

enum class SeedKind { text, image };
enum class Termination { converged, max_iterations };

std::string_view to_string(SeedKind kind) noexcept;
std::string_view to_string(Termination termination) noexcept;
SeedKind seed_kind_from_string(std::string_view text);
Termination termination_from_string(std::string_view text);

struct LoopParams {
  double epsilon = 0.95;  // text-embedding convergence threshold
  double gamma = 0.95;    // image-embedding convergence threshold
  int max_iters = 5;
  std::uint64_t random_seed = 0;
  bool operator==(const LoopParams&) const = default;
};

struct TraceImage {
  Image image;
  Embedding embedding;
  bool operator==(const TraceImage&) const = default;
};

struct TraceDescription {
  std::string text;
  std::vector<std::string> tokens;
  Embedding embedding;
  bool operator==(const TraceDescription&) const = default;
};

// One describe -> generate cycle.
struct LoopIteration {
  int index = 0;
  TraceDescription description;  // d_t
  TraceImage image;              // image generated from d_t
  std::optional<double> similarity_to_previous;
  bool operator==(const LoopIteration&) const = default;
};

struct LoopTrace {
  std::string seed_id;
  SeedKind seed_kind = SeedKind::text;
  ConceptKind concept_kind = ConceptKind::emotion;
  std::string seed_label;   // admissible label the seed depicts (ground truth)
  std::string seed_prompt;  // P_0 for text-seeded runs, empty otherwise
  TraceImage seed_image;    // im_0: generated (text-seeded) or supplied (image-seeded)
  std::vector<LoopIteration> iterations;
  Termination termination = Termination::max_iterations;
  LoopParams params;

  std::size_t image_count() const noexcept { return 1 + iterations.size(); }
  std::size_t description_count() const noexcept { return iterations.size(); }
  const TraceImage& final_image() const noexcept {
    return iterations.empty() ? seed_image : iterations.back().image;
  }

  bool operator==(const LoopTrace&) const = default;
};

}  // namespace biasloop
