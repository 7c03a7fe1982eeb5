#include "biasloop/core/labels.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "biasloop/core/error.hpp"

namespace biasloop {

std::string normalize_label(std::string_view raw) {
  std::string folded;
  folded.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    // U+2013 / U+2014 in UTF-8: E2 80 93 / E2 80 94
    if (i + 2 < raw.size() && static_cast<unsigned char>(raw[i]) == 0xE2 &&
        static_cast<unsigned char>(raw[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(raw[i + 2]) == 0x93 || static_cast<unsigned char>(raw[i + 2]) == 0x94)) {
      folded.push_back('-');
      i += 2;
      continue;
    }
    folded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(raw[i]))));
  }

  std::string out;
  out.reserve(folded.size());
  bool pending_space = false;
  for (char c : folded) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (c == '-' && !out.empty() && out.back() == '-') continue;
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string_view to_string(ConceptKind kind) noexcept {
  return kind == ConceptKind::activity ? "activity" : "emotion";
}

ConceptKind concept_kind_from_string(std::string_view text) {
  const auto norm = normalize_label(text);
  if (norm == "activity") return ConceptKind::activity;
  if (norm == "emotion" || norm == "affect") return ConceptKind::emotion;
  throw Error(ErrorCode::VocabularyMismatch, "unknown concept kind '" + std::string(text) + "'");
}

ConceptSpec::ConceptSpec(ConceptKind kind, std::vector<std::string> admissible_labels, std::string seed_template)
    : kind_(kind), seed_template_(std::move(seed_template)) {
  if (admissible_labels.empty()) throw Error(ErrorCode::VocabularyMismatch, "concept has no admissible labels");
  std::set<std::string> seen;
  for (const auto& label : admissible_labels) {
    auto norm = normalize_label(label);
    if (norm.empty()) throw Error(ErrorCode::VocabularyMismatch, "empty admissible label");
    if (!seen.insert(norm).second) throw Error(ErrorCode::VocabularyMismatch, "duplicate admissible label '" + norm + "'");
    labels_.push_back(std::move(norm));
  }
  if (seed_template_.find("{label}") == std::string::npos)
    throw Error(ErrorCode::VocabularyMismatch, "seed template lacks a {label} placeholder");
}

ConceptSpec ConceptSpec::default_emotion() {
  return ConceptSpec(ConceptKind::emotion, {"happiness", "sadness", "fear", "anger", "neutral", "unsure"},
                     "a person feeling {label}");
}

ConceptSpec ConceptSpec::default_activity() {
  return ConceptSpec(ConceptKind::activity,
                     {"helping and caring", "eating", "household", "dance and music", "personal care", "posing",
                      "sports", "transportation", "work", "other", "unsure"},
                     "a person doing {label}");
}

ConceptSpec ConceptSpec::defaults_for(ConceptKind kind) {
  return kind == ConceptKind::activity ? default_activity() : default_emotion();
}

std::string_view ConceptSpec::noun() const noexcept {
  return kind_ == ConceptKind::activity ? "activity" : "affect";
}

bool ConceptSpec::is_admissible(std::string_view label) const { return index_of(label) >= 0; }

int ConceptSpec::index_of(std::string_view label) const {
  const auto norm = normalize_label(label);
  const auto it = std::find(labels_.begin(), labels_.end(), norm);
  return it == labels_.end() ? -1 : static_cast<int>(it - labels_.begin());
}

std::string ConceptSpec::seed_prompt(std::string_view label) const {
  const int index = index_of(label);
  if (index < 0) throw Error(ErrorCode::VocabularyMismatch, "label '" + std::string(label) + "' is not admissible");
  auto prompt = seed_template_;
  prompt.replace(prompt.find("{label}"), 7, labels_[static_cast<std::size_t>(index)]);
  return prompt;
}

std::string_view to_string(Attribute attribute) noexcept {
  switch (attribute) {
    case Attribute::ethnicity: return "ethnicity";
    case Attribute::gender: return "gender";
    case Attribute::age: return "age";
  }
  return "?";
}

Attribute attribute_from_string(std::string_view text) {
  const auto norm = normalize_label(text);
  if (norm == "ethnicity" || norm == "skin tone" || norm == "skin_tone") return Attribute::ethnicity;
  if (norm == "gender") return Attribute::gender;
  if (norm == "age") return Attribute::age;
  throw Error(ErrorCode::VocabularyMismatch, "unknown attribute '" + std::string(text) + "'");
}

bool AttributeVocabulary::contains(std::string_view label) const { return index_of(label) >= 0; }

int AttributeVocabulary::index_of(std::string_view label) const {
  const auto norm = normalize_label(label);
  const auto it = std::find(labels.begin(), labels.end(), norm);
  return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

namespace {

AttributeVocabulary checked(AttributeVocabulary vocab) {
  std::set<std::string> seen;
  for (auto& label : vocab.labels) {
    label = normalize_label(label);
    if (!seen.insert(label).second)
      throw Error(ErrorCode::VocabularyMismatch, "duplicate label '" + label + "' in " + vocab.heading);
  }
  if (!seen.count(std::string(kUnsure))) vocab.labels.emplace_back(kUnsure);
  if (vocab.labels.size() < 2) throw Error(ErrorCode::VocabularyMismatch, vocab.heading + " needs at least one label");
  return vocab;
}

}  // namespace

DemographicSchema::DemographicSchema(AttributeVocabulary ethnicity, AttributeVocabulary gender, AttributeVocabulary age)
    : vocabularies_{checked(std::move(ethnicity)), checked(std::move(gender)), checked(std::move(age))} {}

DemographicSchema DemographicSchema::standard() {
  return DemographicSchema(
      {"Ethnicity", {"caucasian", "african-american", "asian", "unsure"}, {"Caucasian", "African-American", "Asian"}},
      {"Gender", {"male", "female", "unsure"}, {"male", "female", "unsure"}},
      {"Age", {"0-3", "4-19", "20-39", "40-69", "70+", "unsure"}, {"0--3", "4--19", "20--39", "40--69", "70+"}});
}

DemographicSchema DemographicSchema::skin_tone() {
  auto schema = standard();
  schema.vocabularies_[0] = checked({"Skin tone", {"lighter", "darker", "unsure"}, {"lighter", "darker"}});
  return schema;
}

DemographicProfile::DemographicProfile(const DemographicSchema& schema, std::string_view ethnicity,
                                       std::string_view gender, std::string_view age) {
  const std::array<std::string_view, 3> raw{ethnicity, gender, age};
  for (auto attribute : kAllAttributes) {
    const auto i = static_cast<std::size_t>(attribute);
    const auto& vocab = schema.vocabulary(attribute);
    const int index = vocab.index_of(raw[i]);
    if (index < 0)
      throw Error(ErrorCode::VocabularyMismatch,
                  "'" + std::string(raw[i]) + "' is not a " + vocab.heading + " label");
    fields_[i] = vocab.labels[static_cast<std::size_t>(index)];
  }
}

DemographicProfile DemographicProfile::all_unsure() {
  DemographicProfile profile;
  profile.fields_.fill(std::string(kUnsure));
  return profile;
}

}  // namespace biasloop
