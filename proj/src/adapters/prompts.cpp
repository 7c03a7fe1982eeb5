#include "biasloop/adapters/prompts.hpp"

#include <cctype>
#include <array>
#include <optional>
#include <regex>

namespace biasloop::adapters {

namespace {

std::string join(const std::vector<std::string>& items, std::string_view separator) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += separator;
    out += items[i];
  }
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string strip_brackets(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  int depth = 0;
  for (char c : text) {
    if (c == '[') {
      ++depth;
      out.push_back(' ');
    } else if (c == ']' && depth > 0) {
      --depth;
      out.push_back(' ');
    } else {
      out.push_back(depth > 0 ? ' ' : c);
    }
  }
  return out;
}

}  // namespace

std::string render_description_prompt(const ConceptSpec& spec, PromptStyle style) {
  if (style == PromptStyle::loop) {
    const std::string noun(spec.noun());
    return "Focussing on " + noun +
           " of a person, and ignoring other aspects such as the fact that the image is a closeup, describe " + noun +
           " of the person in the image. Keep the description to at most 50-60 words.";
  }
  const auto labels = "[" + join(spec.admissible_labels(), ", ") + "]";
  if (spec.kind() == ConceptKind::emotion) {
    return "Focusing only on the expressions and emotions of the person or people shown, describe the emotions and "
           "expressions of the person or people in the image from one of the following emotions: " +
           labels + ". Keep the description to at most 50-60 words.";
  }
  return "Focusing only on the activities that the person or people shown are doing, describe the activities that the "
         "person or people shown are doing from one of the following categories of activities: " +
         labels + ". Keep the description to at most 50-60 words.";
}

std::string render_demographic_prompt(const DemographicSchema& schema) {
  std::string out =
      "Answer the following questions about the person shown in the image. Fill in the gaps based on the options "
      "provided. Do not describe the image or give extra details; only select the best option from the list.";
  int number = 1;
  for (auto attribute : kAllAttributes) {
    const auto& vocab = schema.vocabulary(attribute);
    out += "\n" + std::to_string(number++) + ". " + vocab.heading + ": [Choose from: " + join(vocab.prompt_options, ", ") +
           "]";
  }
  return out;
}

std::string render_demographic_answer(const DemographicProfile& profile, const DemographicSchema& schema) {
  std::string out;
  int number = 1;
  for (auto attribute : kAllAttributes) {
    const auto& vocab = schema.vocabulary(attribute);
    const auto& value = profile.get(attribute);
    // Prefer the prompt's own spelling ("Caucasian") when it names this label.
    std::string shown = value;
    for (const auto& option : vocab.prompt_options)
      if (normalize_label(option) == value) shown = option;
    if (number > 1) out += ' ';
    out += std::to_string(number++) + ". " + shown;
  }
  return out;
}

int find_first_label(const std::string& text, const std::vector<std::string>& labels) {
  const auto haystack = normalize_label(strip_brackets(text));
  int best = -1;
  std::size_t best_pos = std::string::npos;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto needle = normalize_label(labels[i]);
    if (needle.empty()) continue;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) {
      const bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]);
      const auto end = pos + needle.size();
      const bool right_ok = end >= haystack.size() || !is_word_char(haystack[end]) || !is_word_char(needle.back());
      if (!left_ok || !right_ok) continue;
      if (pos < best_pos || (pos == best_pos && needle.size() > normalize_label(labels[static_cast<std::size_t>(best)]).size())) {
        best = static_cast<int>(i);
        best_pos = pos;
      }
      break;
    }
  }
  return best;
}

ParsedDemographics parse_demographic_answer(const std::string& text, const DemographicSchema& schema) {
  ParsedDemographics result{DemographicProfile::all_unsure(), false, {}};
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    result.flagged = true;
    result.diagnostics.emplace_back("empty answer");
    return result;
  }

  // Segment the answer on "1." / "2)" style markers; each segment answers one question.
  static const std::regex marker(R"((?:^|\s)([1-3])\s*[.)])");
  std::array<std::optional<std::string>, 3> segments;
  std::vector<std::pair<int, std::size_t>> found;  // (question, segment start)
  std::vector<std::size_t> marker_starts;
  for (std::sregex_iterator it(text.begin(), text.end(), marker), end; it != end; ++it) {
    const int question = (*it)[1].str()[0] - '1';
    found.emplace_back(question, static_cast<std::size_t>(it->position() + it->length()));
    marker_starts.push_back(static_cast<std::size_t>(it->position()));
  }
  for (std::size_t i = 0; i < found.size(); ++i) {
    const auto [question, start] = found[i];
    const auto stop = i + 1 < found.size() ? marker_starts[i + 1] : text.size();
    auto& slot = segments[static_cast<std::size_t>(question)];
    if (!slot) slot = text.substr(start, stop > start ? stop - start : 0);
  }

  const bool structured = !found.empty();
  if (!structured) {
    result.flagged = true;
    result.diagnostics.emplace_back("no numbered answers; scanned free text");
  }

  std::array<std::string, 3> values;
  for (auto attribute : kAllAttributes) {
    const auto i = static_cast<std::size_t>(attribute);
    const auto& vocab = schema.vocabulary(attribute);
    const std::string& scope = structured ? (segments[i] ? *segments[i] : std::string()) : text;
    const int index = find_first_label(scope, vocab.labels);
    if (index < 0) {
      values[i] = std::string(kUnsure);
      result.flagged = true;
      result.diagnostics.push_back(vocab.heading + ": no admissible option in '" + scope + "'");
    } else {
      values[i] = vocab.labels[static_cast<std::size_t>(index)];
    }
  }
  result.profile = DemographicProfile(schema, values[0], values[1], values[2]);
  return result;
}

}  // namespace biasloop::adapters
