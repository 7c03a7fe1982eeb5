#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biasloop/adapters/backend.hpp"
#include "biasloop/core/labels.hpp"

namespace biasloop::adapters {

// A deterministic stand-in for the generator/describer pair. Images are small
// PNGs whose fixed pixels carry a demographic state and a concept label; each
// describe -> generate cycle moves the state one step along a Markov kernel.
struct SyntheticWorldConfig {
  DemographicSchema schema = DemographicSchema::standard();
  // State space = ethnicities x genders x ages (row-major in that order).
  // Empty lists default to the schema's labels without "unsure".
  std::vector<std::string> ethnicities;
  std::vector<std::string> genders;
  std::vector<std::string> ages;
  std::vector<std::vector<double>> kernel;  // row-stochastic; empty = identity
  std::vector<double> initial;              // empty = uniform
  ConceptSpec concept_spec = ConceptSpec::default_emotion();
  // Probability the describer reports the image's own concept label.
  double label_fidelity = 1.0;
  std::map<std::string, double> label_fidelity_by_gender;  // overrides label_fidelity
  std::uint64_t noise_seed = 0;
  int image_size = 16;
  int heatmap_size = 24;
  double embedding_noise = 0.0;
  int text_embedding_dims = 64;
};

struct SyntheticImageInfo {
  std::size_t state = 0;
  int label = -1;  // index into concept labels, -1 = none
  std::uint32_t serial = 0;
};

class SyntheticWorld final : public Backend {
 public:
  // Throws InvalidKernel for non-stochastic rows or mismatched dimensions.
  explicit SyntheticWorld(SyntheticWorldConfig config);

  Image generate_image(const std::string& prompt, std::uint64_t seed) override;
  Description describe_image(const std::string& prompt, const Image& image) override;
  Embedding embed(const EmbedPayload& payload) override;
  Heatmap fetch_saliency(const Image& image, const std::string& prompt, std::size_t token_index) override;

  const SyntheticWorldConfig& config() const noexcept { return config_; }
  std::size_t state_count() const noexcept { return config_.initial.size(); }

  DemographicProfile profile_of(std::size_t state) const;
  std::optional<std::size_t> state_of(const DemographicProfile& profile) const;

  // Seed image depicting `label` with a state drawn from the initial distribution.
  Image seed_image(std::string_view label, std::uint64_t seed) const;
  Image render(std::size_t state, int label, std::uint32_t serial) const;
  std::optional<SyntheticImageInfo> inspect(const Image& image) const;

 private:
  std::size_t sample(const std::vector<double>& row, double u) const;
  int emitted_label(const SyntheticImageInfo& info, const Image& image) const;

  SyntheticWorldConfig config_;
};

std::shared_ptr<SyntheticWorld> make_synthetic_world(SyntheticWorldConfig config);

// SentencePiece-like split of text into words and punctuation; tokens that
// follow whitespace carry a leading "\xE2\x96\x81" marker.
std::vector<std::string> simple_tokenize(const std::string& text);

}  // namespace biasloop::adapters
