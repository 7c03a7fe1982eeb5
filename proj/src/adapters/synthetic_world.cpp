#include "biasloop/adapters/synthetic_world.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "biasloop/adapters/codec.hpp"
#include "biasloop/adapters/prompts.hpp"
#include "biasloop/core/error.hpp"
#include "biasloop/core/hashing.hpp"

namespace biasloop::adapters {

namespace {

constexpr std::uint8_t kMagic[3] = {0x5A, 0xA5, 0x3C};
constexpr std::uint8_t kNoLabel = 0xFF;
constexpr std::string_view kDemographicPromptPrefix = "Answer the following questions";
constexpr std::string_view kConstrainedPromptMarker = "from one of the following";
const std::string kWordMarker = "\xE2\x96\x81";

std::vector<std::string> labels_or_default(const std::vector<std::string>& chosen, const AttributeVocabulary& vocab) {
  std::vector<std::string> out;
  if (chosen.empty()) {
    for (const auto& label : vocab.labels)
      if (label != kUnsure) out.push_back(label);
    return out;
  }
  for (const auto& label : chosen) {
    const int index = vocab.index_of(label);
    if (index < 0) throw Error(ErrorCode::VocabularyMismatch, "'" + label + "' is not a " + vocab.heading + " label");
    out.push_back(vocab.labels[static_cast<std::size_t>(index)]);
  }
  return out;
}

void check_stochastic(const std::vector<double>& row, const std::string& what) {
  double total = 0.0;
  for (double p : row) {
    if (!(p >= 0.0)) throw Error(ErrorCode::InvalidKernel, what + " has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorCode::InvalidKernel, what + " does not sum to 1");
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out;
}

}  // namespace

std::vector<std::string> simple_tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  bool after_space = false;
  std::size_t i = 0;
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '\'' || c == '+'; };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      after_space = true;
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (is_word(c))
      while (j < text.size() && is_word(text[j])) ++j;
    tokens.push_back((after_space ? kWordMarker : std::string()) + text.substr(i, j - i));
    after_space = false;
    i = j;
  }
  return tokens;
}

SyntheticWorld::SyntheticWorld(SyntheticWorldConfig config) : config_(std::move(config)) {
  config_.ethnicities = labels_or_default(config_.ethnicities, config_.schema.vocabulary(Attribute::ethnicity));
  config_.genders = labels_or_default(config_.genders, config_.schema.vocabulary(Attribute::gender));
  config_.ages = labels_or_default(config_.ages, config_.schema.vocabulary(Attribute::age));
  const auto states = config_.ethnicities.size() * config_.genders.size() * config_.ages.size();
  if (states == 0 || states > 0xFFFF) throw Error(ErrorCode::InvalidKernel, "state space must hold 1..65535 states");

  if (config_.initial.empty()) config_.initial.assign(states, 1.0 / static_cast<double>(states));
  if (config_.initial.size() != states)
    throw Error(ErrorCode::InvalidKernel, "initial distribution has " + std::to_string(config_.initial.size()) +
                                              " entries for " + std::to_string(states) + " states");
  check_stochastic(config_.initial, "initial distribution");

  if (config_.kernel.empty()) {
    config_.kernel.assign(states, std::vector<double>(states, 0.0));
    for (std::size_t s = 0; s < states; ++s) config_.kernel[s][s] = 1.0;
  }
  if (config_.kernel.size() != states) throw Error(ErrorCode::InvalidKernel, "kernel row count does not match state space");
  for (std::size_t s = 0; s < states; ++s) {
    if (config_.kernel[s].size() != states) throw Error(ErrorCode::InvalidKernel, "kernel is not square");
    check_stochastic(config_.kernel[s], "kernel row " + std::to_string(s));
  }

  if (config_.concept_spec.admissible_labels().size() >= kNoLabel)
    throw Error(ErrorCode::InvalidArgument, "too many concept labels for the synthetic encoding");
  if (config_.image_size < 4) throw Error(ErrorCode::InvalidArgument, "synthetic images must be at least 4x4");
  if (config_.heatmap_size < 1) throw Error(ErrorCode::InvalidArgument, "heatmap size must be positive");
  if (config_.text_embedding_dims < 1) throw Error(ErrorCode::InvalidArgument, "text embedding needs >= 1 dims");
}

DemographicProfile SyntheticWorld::profile_of(std::size_t state) const {
  const auto ages = config_.ages.size();
  const auto genders = config_.genders.size();
  return DemographicProfile(config_.schema, config_.ethnicities[state / (ages * genders)],
                            config_.genders[(state / ages) % genders], config_.ages[state % ages]);
}

std::optional<std::size_t> SyntheticWorld::state_of(const DemographicProfile& profile) const {
  auto find = [](const std::vector<std::string>& labels, const std::string& label) -> std::optional<std::size_t> {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) return std::nullopt;
    return static_cast<std::size_t>(it - labels.begin());
  };
  const auto e = find(config_.ethnicities, profile.ethnicity());
  const auto g = find(config_.genders, profile.gender());
  const auto a = find(config_.ages, profile.age());
  if (!e || !g || !a) return std::nullopt;
  return (*e * config_.genders.size() + *g) * config_.ages.size() + *a;
}

std::size_t SyntheticWorld::sample(const std::vector<double>& row, double u) const {
  double cumulative = 0.0;
  for (std::size_t s = 0; s < row.size(); ++s) {
    cumulative += row[s];
    if (u < cumulative) return s;
  }
  // u landed in the rounding gap at the top; take the last state with mass.
  for (std::size_t s = row.size(); s-- > 0;)
    if (row[s] > 0.0) return s;
  return row.size() - 1;
}

Image SyntheticWorld::render(std::size_t state, int label, std::uint32_t serial) const {
  RgbImage raster;
  raster.width = raster.height = config_.image_size;
  raster.rgb.resize(3 * static_cast<std::size_t>(raster.width) * static_cast<std::size_t>(raster.height));
  for (int r = 0; r < raster.height; ++r)
    for (int c = 0; c < raster.width; ++c) {
      auto* px = raster.pixel(r, c);
      px[0] = static_cast<std::uint8_t>(40 + 23 * state + 3 * r);
      px[1] = static_cast<std::uint8_t>(90 + 31 * (label + 1) + 5 * c);
      px[2] = static_cast<std::uint8_t>(160 + 7 * (r + c));
    }
  auto* magic = raster.pixel(0, 0);
  std::copy(std::begin(kMagic), std::end(kMagic), magic);
  auto* meta = raster.pixel(0, 1);
  meta[0] = static_cast<std::uint8_t>(state >> 8);
  meta[1] = static_cast<std::uint8_t>(state & 0xFF);
  meta[2] = label < 0 ? kNoLabel : static_cast<std::uint8_t>(label);
  auto* noise = raster.pixel(0, 2);
  noise[0] = static_cast<std::uint8_t>(serial >> 16);
  noise[1] = static_cast<std::uint8_t>(serial >> 8);
  noise[2] = static_cast<std::uint8_t>(serial);
  return encode_png(raster);
}

std::optional<SyntheticImageInfo> SyntheticWorld::inspect(const Image& image) const {
  RgbImage raster;
  try {
    raster = decode_png(image);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (raster.width < 3 || raster.height < 1) return std::nullopt;
  const auto* magic = raster.pixel(0, 0);
  if (!std::equal(std::begin(kMagic), std::end(kMagic), magic)) return std::nullopt;
  const auto* meta = raster.pixel(0, 1);
  const auto* noise = raster.pixel(0, 2);
  SyntheticImageInfo info;
  info.state = (static_cast<std::size_t>(meta[0]) << 8) | meta[1];
  info.label = meta[2] == kNoLabel ? -1 : meta[2];
  info.serial = (static_cast<std::uint32_t>(noise[0]) << 16) | (static_cast<std::uint32_t>(noise[1]) << 8) | noise[2];
  if (info.state >= state_count()) return std::nullopt;
  if (info.label >= static_cast<int>(config_.concept_spec.admissible_labels().size())) info.label = -1;
  return info;
}

Image SyntheticWorld::seed_image(std::string_view label, std::uint64_t seed) const {
  SplitMixStream rng(mix(config_.noise_seed ^ 0x5EED5EEDULL, seed));
  const auto state = sample(config_.initial, rng.unit());
  const auto serial = static_cast<std::uint32_t>(rng.next() & 0xFFFFFF);
  return render(state, config_.concept_spec.index_of(label), serial);
}

int SyntheticWorld::emitted_label(const SyntheticImageInfo& info, const Image& image) const {
  if (info.label < 0) return -1;
  double fidelity = config_.label_fidelity;
  const auto gender = profile_of(info.state).gender();
  if (const auto it = config_.label_fidelity_by_gender.find(gender); it != config_.label_fidelity_by_gender.end())
    fidelity = it->second;
  SplitMixStream rng(mix(config_.noise_seed ^ 0x1ABE1ULL, fnv1a(std::span<const std::uint8_t>(image.png))));
  if (rng.unit() < fidelity) return info.label;
  const auto labels = static_cast<int>(config_.concept_spec.admissible_labels().size());
  if (labels < 2) return info.label;
  const int offset = 1 + static_cast<int>(rng.unit() * (labels - 1));
  return (info.label + offset) % labels;
}

Image SyntheticWorld::generate_image(const std::string& prompt, std::uint64_t seed) {
  SplitMixStream rng(mix(mix(config_.noise_seed, seed), fnv1a(prompt)));
  const int e = find_first_label(prompt, config_.ethnicities);
  const int g = find_first_label(prompt, config_.genders);
  const int a = find_first_label(prompt, config_.ages);
  std::size_t next;
  if (e >= 0 && g >= 0 && a >= 0) {
    const auto described = (static_cast<std::size_t>(e) * config_.genders.size() + static_cast<std::size_t>(g)) *
                               config_.ages.size() +
                           static_cast<std::size_t>(a);
    next = sample(config_.kernel[described], rng.unit());
  } else {
    next = sample(config_.initial, rng.unit());
  }
  const int label = find_first_label(prompt, config_.concept_spec.admissible_labels());
  return render(next, label, static_cast<std::uint32_t>(rng.next() & 0xFFFFFF));
}

Description SyntheticWorld::describe_image(const std::string& prompt, const Image& image) {
  const auto info = inspect(image);
  std::string text;
  if (prompt.rfind(kDemographicPromptPrefix, 0) == 0) {
    text = info ? render_demographic_answer(profile_of(info->state), config_.schema) : "1. unsure 2. unsure 3. unsure";
  } else {
    const auto& labels = config_.concept_spec.admissible_labels();
    const int label = info ? emitted_label(*info, image) : -1;
    const bool emotion = config_.concept_spec.kind() == ConceptKind::emotion;
    if (prompt.find(kConstrainedPromptMarker) != std::string::npos) {
      text = "Out of the categories specified [" + join(labels) + "], the " + (emotion ? "emotion" : "activity") +
             " shown is " + (label >= 0 ? labels[static_cast<std::size_t>(label)] : std::string("not clear")) + ".";
    } else if (info) {
      const auto profile = profile_of(info->state);
      text = "The " + profile.gender() + " person, aged " + profile.age() + ", of " + profile.ethnicity() +
             " appearance, is " + (emotion ? "expressing " : "engaged in ") +
             (label >= 0 ? labels[static_cast<std::size_t>(label)] : std::string("something unclear")) + ".";
    } else {
      text = "The image does not show a recognizable person.";
    }
  }
  return {text, simple_tokenize(text)};
}

Embedding SyntheticWorld::embed(const EmbedPayload& payload) {
  if (const auto* text = std::get_if<std::string>(&payload)) {
    Embedding vector(static_cast<std::size_t>(config_.text_embedding_dims), 0.0);
    std::string word;
    auto flush = [&] {
      if (word.empty()) return;
      vector[fnv1a(word) % vector.size()] += 1.0;
      word.clear();
    };
    for (char c : *text) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '+')
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      else
        flush();
    }
    flush();
    return vector;
  }

  const auto& image = std::get<Image>(payload);
  const auto states = state_count();
  const auto labels = config_.concept_spec.admissible_labels().size();
  Embedding vector(states + labels, 0.0);
  if (const auto info = inspect(image)) {
    vector[info->state] = 1.0;
    if (info->label >= 0) vector[states + static_cast<std::size_t>(info->label)] = 0.5;
    if (config_.embedding_noise > 0.0) {
      SplitMixStream rng(mix(config_.noise_seed ^ 0xE3BEDULL, info->serial));
      for (auto& v : vector) v += config_.embedding_noise * rng.normal();
    }
  } else {
    // Foreign image: a stable pixel-hash signature of the same dimensionality.
    SplitMixStream rng(fnv1a(std::span<const std::uint8_t>(image.png)));
    for (auto& v : vector) v = rng.unit() + 0.01;
  }
  return vector;
}

Heatmap SyntheticWorld::fetch_saliency(const Image& image, const std::string& prompt, std::size_t token_index) {
  const int size = config_.heatmap_size;
  SplitMixStream rng(mix(mix(config_.noise_seed ^ 0x5A11E4CEULL, fnv1a(std::span<const std::uint8_t>(image.png))),
                         mix(fnv1a(prompt), token_index)));
  const double cy = rng.unit() * size;
  const double cx = rng.unit() * size;
  const double sigma = std::max(1.0, size / 6.0);
  std::vector<double> values(static_cast<std::size_t>(size) * static_cast<std::size_t>(size));
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double dy = r + 0.5 - cy;
      const double dx = c + 0.5 - cx;
      values[static_cast<std::size_t>(r) * static_cast<std::size_t>(size) + static_cast<std::size_t>(c)] =
          0.05 + std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
    }
  return Heatmap(size, size, std::move(values));
}

std::shared_ptr<SyntheticWorld> make_synthetic_world(SyntheticWorldConfig config) {
  return std::make_shared<SyntheticWorld>(std::move(config));
}

}  // namespace biasloop::adapters
