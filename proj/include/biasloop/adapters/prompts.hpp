#pragma once

#include <string>
#include <vector>

#include "biasloop/core/labels.hpp"

namespace biasloop::adapters {

enum class PromptStyle {
  loop,         // free description used inside the generation/description loop
  constrained,  // closed label list, used for predictions and saliency
};

// Loop prompt P_T, or the constrained emotion/activity prompt with the
// admissible labels listed in the concept's order.
std::string render_description_prompt(const ConceptSpec& spec, PromptStyle style);

// The option-only annotation prompt (three numbered questions).
std::string render_demographic_prompt(const DemographicSchema& schema = DemographicSchema::standard());

// Canonical answer text for a profile, e.g. "1. Caucasian 2. female 3. 20-39".
std::string render_demographic_answer(const DemographicProfile& profile,
                                      const DemographicSchema& schema = DemographicSchema::standard());

struct ParsedDemographics {
  DemographicProfile profile;
  bool flagged = false;  // some field could not be resolved, or the answer had no numbered structure
  std::vector<std::string> diagnostics;
};

// Total: never throws. Values outside the vocabulary become "unsure".
ParsedDemographics parse_demographic_answer(const std::string& text,
                                            const DemographicSchema& schema = DemographicSchema::standard());

// Earliest whole-word occurrence of any of `labels` in `text` (both normalized),
// preferring the longer label on ties. Returns the index into `labels` or -1.
// Bracketed "[...]" spans are ignored.
int find_first_label(const std::string& text, const std::vector<std::string>& labels);

}  // namespace biasloop::adapters
