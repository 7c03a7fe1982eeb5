#include "biasloop/saliency/saliency.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "biasloop/core/error.hpp"

namespace biasloop::saliency {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Non-ASCII bytes stay inside words so accented text is not split mid-character.
bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0 || c == '\'';
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string strip_markers(std::string token) {
  for (std::string_view marker : {"\xE2\x96\x81", "\xC4\xA0", "\xC4\x8A"}) {
    for (auto at = token.find(marker); at != std::string::npos; at = token.find(marker)) token.erase(at, marker.size());
  }
  std::erase_if(token, is_space);
  return token;
}

bool looks_special(const std::string& token) {
  return token.size() > 2 && token.front() == '<' && token.back() == '>' &&
         token.find_first_of("<> \t\n", 1) == token.size() - 1;
}

// [begin, end) character spans of matched "[" ... "]" pairs, outermost only.
std::vector<std::pair<std::size_t, std::size_t>> bracket_spans(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '[') {
      open.push_back(i);
    } else if (text[i] == ']' && !open.empty()) {
      const auto begin = open.back();
      open.pop_back();
      if (open.empty()) spans.emplace_back(begin, i + 1);
    }
  }
  return spans;
}

bool is_connector(std::string_view word) {
  return word == "and" || word == "or" || word == "of" || word == "the" || word == "&";
}

struct Word {
  std::size_t begin;
  std::string text;
};

std::vector<Word> split_words(std::string_view text) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_char(text[i])) {
      ++i;
      continue;
    }
    const auto begin = i;
    while (i < text.size() && is_word_char(text[i])) ++i;
    auto word = lower(text.substr(begin, i - begin));
    while (!word.empty() && word.back() == '\'') word.pop_back();
    if (!word.empty()) words.push_back({begin, std::move(word)});
  }
  return words;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> align_tokens(const std::string& text,
                                                              const std::vector<std::string>& tokens) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  spans.reserve(tokens.size());
  std::size_t pos = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto piece = strip_markers(tokens[t]);
    while (pos < text.size() && is_space(text[pos])) ++pos;
    if (piece.empty()) {
      spans.emplace_back(pos, pos);
      continue;
    }
    if (text.compare(pos, piece.size(), piece) != 0) {
      if (looks_special(piece)) {
        spans.emplace_back(pos, pos);
        continue;
      }
      throw Error(ErrorCode::AlignmentError, "token " + std::to_string(t) + " '" + tokens[t] +
                                                 "' does not match the text at offset " + std::to_string(pos));
    }
    spans.emplace_back(pos, pos + piece.size());
    pos += piece.size();
  }
  while (pos < text.size() && is_space(text[pos])) ++pos;
  if (pos != text.size())
    throw Error(ErrorCode::AlignmentError, "tokens end at offset " + std::to_string(pos) + " of " +
                                               std::to_string(text.size()) + " characters");
  return spans;
}

std::optional<DecisionToken> select_decision_token(const std::string& output_text,
                                                   const std::vector<std::string>& tokens, const ConceptSpec& spec) {
  const auto spans = align_tokens(output_text, tokens);
  const auto enumerations = bracket_spans(output_text);
  const auto inside_enumeration = [&](std::size_t at) {
    return std::any_of(enumerations.begin(), enumerations.end(),
                       [at](const auto& span) { return at >= span.first && at < span.second; });
  };

  // word -> first admissible label containing it
  std::vector<std::pair<std::string, std::string>> vocabulary;
  for (const auto& label : spec.admissible_labels()) {
    for (auto& part : split_words(label)) {
      if (is_connector(part.text)) continue;
      const bool seen = std::any_of(vocabulary.begin(), vocabulary.end(), [&](const auto& v) { return v.first == part.text; });
      if (!seen) vocabulary.emplace_back(std::move(part.text), label);
    }
  }

  for (const auto& word : split_words(output_text)) {
    if (inside_enumeration(word.begin)) continue;
    const auto hit = std::find_if(vocabulary.begin(), vocabulary.end(), [&](const auto& v) { return v.first == word.text; });
    if (hit == vocabulary.end()) continue;
    for (std::size_t t = 0; t < spans.size(); ++t) {
      if (word.begin >= spans[t].first && word.begin < spans[t].second) return DecisionToken{t, hit->second, word.text};
    }
    throw Error(ErrorCode::AlignmentError, "no token covers '" + word.text + "'");
  }
  return std::nullopt;
}

RegionSet build_regions(const std::optional<Box>& face, const std::optional<BinaryMask>& hair,
                        const std::optional<Box>& body, int height, int width) {
  if (height <= 0 || width <= 0) throw Error(ErrorCode::GeometryError, "image dimensions must be positive");
  const auto check_box = [&](const Box& box, std::string_view name) {
    if (box.w < 0 || box.h < 0 || box.x < 0 || box.y < 0 || box.x + box.w > width || box.y + box.h > height)
      throw Error(ErrorCode::GeometryError,
                  fmt::format("{} box {{x={}, y={}, w={}, h={}}} lies outside the {}x{} image", name, box.x, box.y,
                              box.w, box.h, height, width));
  };
  if (face) check_box(*face, "face");
  if (body) check_box(*body, "body");
  if (hair && (hair->height() != height || hair->width() != width))
    throw Error(ErrorCode::GeometryError, fmt::format("hair mask is {}x{}, image is {}x{}", hair->height(),
                                                      hair->width(), height, width));

  std::optional<Box> body_box = body;
  bool body_clamped_away = false;
  if (face && body_box) {
    const int face_bottom = face->y + face->h;
    if (body_box->y < face_bottom) {
      const int bottom = body_box->y + body_box->h;
      body_box->y = std::min(face_bottom, bottom);
      body_box->h = bottom - body_box->y;
      body_clamped_away = body_box->h == 0 && body->h > 0;
    }
  }

  std::vector<Region> owners(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), Region::background);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      auto& owner = owners[static_cast<std::size_t>(r) * static_cast<std::size_t>(width) + static_cast<std::size_t>(c)];
      if (face && face->contains(r, c))
        owner = Region::face;
      else if (hair && hair->get(r, c))
        owner = Region::hair;
      else if (body_box && body_box->contains(r, c))
        owner = Region::body;
    }
  }

  std::array<std::size_t, 4> counts{};
  for (auto owner : owners) ++counts[static_cast<std::size_t>(owner)];

  std::vector<RegionDiagnostic> diagnostics;
  for (auto region : kAllRegions) {
    if (counts[static_cast<std::size_t>(region)] > 0) continue;
    std::string reason;
    if ((region == Region::face && !face) || (region == Region::hair && !hair) || (region == Region::body && !body))
      reason = "not provided";
    else if (region == Region::body && body_clamped_away)
      reason = "empty after clamping to the face bottom";
    else
      reason = "no pixels left after ownership resolution";
    diagnostics.push_back({region, "DegenerateRegion: " + reason});
  }
  return RegionSet(height, width, std::move(owners), std::move(diagnostics));
}

std::string_view to_string(Interpolation mode) noexcept {
  return mode == Interpolation::nearest ? "nearest" : "bilinear";
}

Interpolation interpolation_from_string(std::string_view text) {
  if (text == "bilinear") return Interpolation::bilinear;
  if (text == "nearest") return Interpolation::nearest;
  throw Error(ErrorCode::ConfigError, "unknown interpolation '" + std::string(text) + "'");
}

namespace {

struct Tap {
  int i0;
  int i1;
  double frac;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = std::max(0.0, (o + 0.5) * scale - 0.5);
    const int i0 = std::min(static_cast<int>(src), in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, std::min(i0 + 1, in - 1), src - i0};
  }
  return taps;
}

std::vector<int> nearest_taps(int in, int out) {
  std::vector<int> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) taps[static_cast<std::size_t>(o)] = std::min(static_cast<int>(std::floor(o * scale)), in - 1);
  return taps;
}

}  // namespace

Heatmap upsample(const Heatmap& map, int height, int width, Interpolation mode) {
  if (height <= 0 || width <= 0) throw Error(ErrorCode::InvalidArgument, "target dimensions must be positive");
  std::vector<double> out(static_cast<std::size_t>(height) * static_cast<std::size_t>(width));
  auto cell = out.begin();
  if (mode == Interpolation::nearest) {
    const auto rows = nearest_taps(map.height(), height);
    const auto cols = nearest_taps(map.width(), width);
    for (int r : rows)
      for (int c : cols) *cell++ = map.at(r, c);
  } else {
    const auto rows = bilinear_taps(map.height(), height);
    const auto cols = bilinear_taps(map.width(), width);
    for (const auto& ry : rows) {
      for (const auto& cx : cols) {
        const double top = (1.0 - cx.frac) * map.at(ry.i0, cx.i0) + cx.frac * map.at(ry.i0, cx.i1);
        const double bottom = (1.0 - cx.frac) * map.at(ry.i1, cx.i0) + cx.frac * map.at(ry.i1, cx.i1);
        *cell++ = std::max(0.0, (1.0 - ry.frac) * top + ry.frac * bottom);
      }
    }
  }
  return Heatmap(height, width, std::move(out));
}

RegionShares region_shares(const Heatmap& map, const RegionSet& regions) {
  if (map.height() != regions.height() || map.width() != regions.width())
    throw Error(ErrorCode::GeometryError, fmt::format("heatmap is {}x{}, regions are {}x{}", map.height(), map.width(),
                                                      regions.height(), regions.width()));
  std::array<double, 4> sums{};
  for (int r = 0; r < map.height(); ++r)
    for (int c = 0; c < map.width(); ++c) sums[static_cast<std::size_t>(regions.owner(r, c))] += map.at(r, c);

  RegionShares result;
  result.regions_present = regions.regions_present();
  if (result.regions_present.empty()) throw Error(ErrorCode::GeometryError, "no region has any pixels");
  double total = 0.0;
  for (auto region : result.regions_present) {
    const auto i = static_cast<std::size_t>(region);
    result.shares[i] = sums[i] / static_cast<double>(regions.pixel_count(region));
    total += result.shares[i];
  }
  if (!(total > 0.0)) throw Error(ErrorCode::UndefinedShares, "heatmap is zero over every region");
  for (auto& share : result.shares) share /= total;
  return result;
}

CorpusRegionSummary aggregate_corpus(const std::vector<RegionShares>& images) {
  if (images.empty()) throw Error(ErrorCode::InsufficientData, "no images to aggregate");
  CorpusRegionSummary summary;
  summary.regions = images.front().regions_present;
  summary.n = images.size();
  for (std::size_t i = 1; i < images.size(); ++i) {
    if (images[i].regions_present != summary.regions)
      throw Error(ErrorCode::RegionSetMismatch, fmt::format("image {} has {} regions, image 0 has {}", i,
                                                            images[i].regions_present.size(), summary.regions.size()));
  }
  const auto n = static_cast<double>(images.size());
  for (auto region : summary.regions) {
    const auto k = static_cast<std::size_t>(region);
    double mean = 0.0;
    for (const auto& image : images) mean += image.shares[k];
    mean /= n;
    double var = 0.0;
    for (const auto& image : images) var += (image.shares[k] - mean) * (image.shares[k] - mean);
    summary.stats[k] = {mean, std::sqrt(var / n)};
  }
  return summary;
}

std::string format_summary(const CorpusRegionSummary& summary, int decimals) {
  std::string out;
  for (auto region : summary.regions) {
    const auto& s = summary.stat(region);
    out += fmt::format("{} {:.{}f} \xC2\xB1 {:.{}f}\n", display_name(region), s.mean, decimals, s.std, decimals);
  }
  return out;
}

}  // namespace biasloop::saliency
