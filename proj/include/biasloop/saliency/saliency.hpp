#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "biasloop/core/geometry.hpp"
#include "biasloop/core/heatmap.hpp"
#include "biasloop/core/labels.hpp"

namespace biasloop::saliency {

struct DecisionToken {
  std::size_t index = 0;  // position in the describer's tokenization
  std::string label;      // admissible label the word belongs to
  std::string word;       // matched word, normalized
  bool operator==(const DecisionToken&) const = default;
};

// Picks the token carrying the describer's prediction: the first admissible
// word outside any "[...]" span. Each word of a multi-word label counts on its
// own ("helping" or "caring"). Tokens may carry SentencePiece or byte-BPE
// space markers. Throws AlignmentError when the tokens do not spell the text.
std::optional<DecisionToken> select_decision_token(const std::string& output_text,
                                                   const std::vector<std::string>& tokens, const ConceptSpec& spec);

// Character span [begin, end) of each token in `text`; empty tokens get an
// empty span. Throws AlignmentError.
std::vector<std::pair<std::size_t, std::size_t>> align_tokens(const std::string& text,
                                                              const std::vector<std::string>& tokens);

// Face > hair > body ownership, background the remainder. When both boxes are
// given the body's top edge moves down to the face's bottom edge. Boxes and the
// hair mask must lie inside the image (GeometryError). Every region left with
// no pixels gets a DegenerateRegion diagnostic.
RegionSet build_regions(const std::optional<Box>& face, const std::optional<BinaryMask>& hair,
                        const std::optional<Box>& body, int height, int width);

enum class Interpolation { bilinear, nearest };
std::string_view to_string(Interpolation mode) noexcept;
Interpolation interpolation_from_string(std::string_view text);

// Resize with half-pixel centres (corners not aligned).
Heatmap upsample(const Heatmap& map, int height, int width, Interpolation mode = Interpolation::bilinear);

struct RegionShares {
  std::vector<Region> regions_present;
  std::array<double, 4> shares{};  // indexed by Region; zero for absent regions

  double share(Region region) const noexcept { return shares[static_cast<std::size_t>(region)]; }
  bool operator==(const RegionShares&) const = default;
};

// Mean activation per present region, normalized to sum to 1. Throws
// GeometryError on a dimension mismatch and UndefinedShares when every mean is 0.
RegionShares region_shares(const Heatmap& map, const RegionSet& regions);

struct RegionStat {
  double mean = 0.0;
  double std = 0.0;  // population
};

struct CorpusRegionSummary {
  std::vector<Region> regions;
  std::array<RegionStat, 4> stats{};
  std::size_t n = 0;

  const RegionStat& stat(Region region) const noexcept { return stats[static_cast<std::size_t>(region)]; }
};

// Throws InsufficientData on an empty list and RegionSetMismatch when images
// disagree on which regions are present.
CorpusRegionSummary aggregate_corpus(const std::vector<RegionShares>& images);

// "Hair 0.231 ± 0.135" per region, in region order, one per line.
std::string format_summary(const CorpusRegionSummary& summary, int decimals = 3);

}  // namespace biasloop::saliency
