#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace biasloop {

// Lowercase, trim, collapse inner whitespace, and fold en/em dashes and "--"
// to a single '-'. All label comparisons go through this.
std::string normalize_label(std::string_view raw);

inline constexpr std::string_view kUnsure = "unsure";

enum class ConceptKind { activity, emotion };

std::string_view to_string(ConceptKind kind) noexcept;
ConceptKind concept_kind_from_string(std::string_view text);

// A target concept with its closed, ordered set of admissible labels.
class ConceptSpec {
 public:
  // Throws VocabularyMismatch when labels are empty or collide after normalization.
  ConceptSpec(ConceptKind kind, std::vector<std::string> admissible_labels, std::string seed_template);

  static ConceptSpec default_emotion();
  static ConceptSpec default_activity();
  static ConceptSpec defaults_for(ConceptKind kind);

  ConceptKind kind() const noexcept { return kind_; }
  const std::vector<std::string>& admissible_labels() const noexcept { return labels_; }
  const std::string& seed_template() const noexcept { return seed_template_; }

  // Word substituted for the concept in the loop describer prompt.
  std::string_view noun() const noexcept;

  bool is_admissible(std::string_view label) const;
  // Index into admissible_labels(), or -1.
  int index_of(std::string_view label) const;

  // Seed prompt P_0 for a text-seeded loop; throws VocabularyMismatch for
  // labels outside the admissible set.
  std::string seed_prompt(std::string_view label) const;

 private:
  ConceptKind kind_;
  std::vector<std::string> labels_;
  std::string seed_template_;
};

// Question order of the demographic prompt.
enum class Attribute { ethnicity = 0, gender = 1, age = 2 };
inline constexpr std::array<Attribute, 3> kAllAttributes{Attribute::ethnicity, Attribute::gender, Attribute::age};

std::string_view to_string(Attribute attribute) noexcept;
Attribute attribute_from_string(std::string_view text);

struct AttributeVocabulary {
  std::string heading;                      // "Ethnicity", "Gender", "Age", "Skin tone"
  std::vector<std::string> labels;          // canonical, normalized; always contains "unsure"
  std::vector<std::string> prompt_options;  // as rendered in the prompt, verbatim

  bool contains(std::string_view label) const;
  int index_of(std::string_view label) const;
};

class DemographicSchema {
 public:
  DemographicSchema(AttributeVocabulary ethnicity, AttributeVocabulary gender, AttributeVocabulary age);

  // Ethnicity / gender / age vocabularies of the option-only annotation prompt.
  static DemographicSchema standard();
  // Same, with ethnicity replaced by the {lighter, darker} skin-tone vocabulary.
  static DemographicSchema skin_tone();

  const AttributeVocabulary& vocabulary(Attribute attribute) const noexcept {
    return vocabularies_[static_cast<std::size_t>(attribute)];
  }

 private:
  std::array<AttributeVocabulary, 3> vocabularies_;
};

class DemographicProfile {
 public:
  // Validates every field against the schema; throws VocabularyMismatch.
  DemographicProfile(const DemographicSchema& schema, std::string_view ethnicity, std::string_view gender,
                     std::string_view age);

  static DemographicProfile all_unsure();

  const std::string& get(Attribute attribute) const noexcept {
    return fields_[static_cast<std::size_t>(attribute)];
  }
  const std::string& ethnicity() const noexcept { return get(Attribute::ethnicity); }
  const std::string& gender() const noexcept { return get(Attribute::gender); }
  const std::string& age() const noexcept { return get(Attribute::age); }

  bool operator==(const DemographicProfile&) const = default;

 private:
  DemographicProfile() = default;
  std::array<std::string, 3> fields_;
};

}  // namespace biasloop
