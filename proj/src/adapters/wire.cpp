#include "biasloop/adapters/wire.hpp"

#include "biasloop/adapters/codec.hpp"
#include "biasloop/core/error.hpp"

namespace biasloop::adapters::wire {

namespace {

[[noreturn]] void violation(const std::string& message) { throw Error(ErrorCode::ProtocolViolation, message); }

const json& require(const json& body, const char* field) {
  if (!body.is_object()) violation("body is not a JSON object");
  const auto it = body.find(field);
  if (it == body.end()) violation(std::string("missing field '") + field + "'");
  return *it;
}

std::string require_string(const json& body, const char* field) {
  const auto& value = require(body, field);
  if (!value.is_string()) violation(std::string("field '") + field + "' must be a string");
  return value.get<std::string>();
}

std::uint64_t require_unsigned(const json& body, const char* field) {
  const auto& value = require(body, field);
  if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0))
    violation(std::string("field '") + field + "' must be a nonnegative integer");
  return value.get<std::uint64_t>();
}

json optional_params(const json& body) {
  const auto it = body.find("params");
  if (it == body.end() || it->is_null()) return json::object();
  if (!it->is_object()) violation("field 'params' must be an object");
  return *it;
}

std::vector<double> require_doubles(const json& body, const char* field) {
  const auto& value = require(body, field);
  if (!value.is_array()) violation(std::string("field '") + field + "' must be an array");
  std::vector<double> out;
  out.reserve(value.size());
  for (const auto& item : value) {
    if (!item.is_number()) violation(std::string("field '") + field + "' must hold numbers");
    out.push_back(item.get<double>());
  }
  return out;
}

}  // namespace

json encode_image(const Image& image) { return base64_encode(image.png); }

Image decode_image(const json& value, const char* field) {
  if (!value.is_string()) violation(std::string("field '") + field + "' must be a base64 string");
  Image image{base64_decode(value.get_ref<const std::string&>())};
  if (image.png.empty()) violation(std::string("field '") + field + "' is empty");
  return image;
}

json to_json(const GenerateRequest& request) {
  return {{"prompt", request.prompt}, {"seed", request.seed}, {"params", request.params}};
}

GenerateRequest parse_generate_request(const json& body) {
  return {require_string(body, "prompt"), require_unsigned(body, "seed"), optional_params(body)};
}

json generate_response(const Image& image) { return {{"image", encode_image(image)}}; }

Image parse_generate_response(const json& body) { return decode_image(require(body, "image"), "image"); }

json to_json(const DescribeRequest& request) {
  return {{"prompt", request.prompt}, {"image", encode_image(request.image)}, {"params", request.params}};
}

DescribeRequest parse_describe_request(const json& body) {
  return {require_string(body, "prompt"), decode_image(require(body, "image"), "image"), optional_params(body)};
}

json describe_response(const Description& description) {
  json body{{"text", description.text}};
  if (!description.tokens.empty()) body["tokens"] = description.tokens;
  return body;
}

Description parse_describe_response(const json& body) {
  Description description{require_string(body, "text"), {}};
  if (const auto it = body.find("tokens"); it != body.end() && !it->is_null()) {
    if (!it->is_array()) violation("field 'tokens' must be an array");
    for (const auto& token : *it) {
      if (!token.is_string()) violation("field 'tokens' must hold strings");
      description.tokens.push_back(token.get<std::string>());
    }
  }
  return description;
}

json embed_request(const EmbedPayload& payload) {
  if (const auto* text = std::get_if<std::string>(&payload)) return {{"modality", "text"}, {"text", *text}};
  return {{"modality", "image"}, {"image", encode_image(std::get<Image>(payload))}};
}

EmbedPayload parse_embed_request(const json& body) {
  const auto modality = require_string(body, "modality");
  if (modality == "text") return require_string(body, "text");
  if (modality == "image") return decode_image(require(body, "image"), "image");
  violation("unknown modality '" + modality + "'");
}

json embed_response(const Embedding& embedding) { return {{"embedding", embedding}}; }

Embedding parse_embed_response(const json& body) { return require_doubles(body, "embedding"); }

json to_json(const SaliencyRequest& request) {
  return {{"image", encode_image(request.image)}, {"prompt", request.prompt}, {"token_index", request.token_index}};
}

SaliencyRequest parse_saliency_request(const json& body) {
  return {decode_image(require(body, "image"), "image"), require_string(body, "prompt"),
          static_cast<std::size_t>(require_unsigned(body, "token_index"))};
}

json heatmap_to_json(const Heatmap& heatmap) {
  return {{"height", heatmap.height()},
          {"width", heatmap.width()},
          {"values", std::vector<double>(heatmap.values().begin(), heatmap.values().end())}};
}

Heatmap heatmap_from_json(const json& body) {
  const auto height = require_unsigned(body, "height");
  const auto width = require_unsigned(body, "width");
  auto values = require_doubles(body, "values");
  try {
    return Heatmap(static_cast<int>(height), static_cast<int>(width), std::move(values));
  } catch (const Error& e) {
    violation(std::string("invalid heatmap: ") + e.what());
  }
}

json error_body(std::string_view code, std::string_view message) {
  return {{"code", std::string(code)}, {"message", std::string(message)}};
}

json parse_object(const std::string& text) {
  json body = json::parse(text, nullptr, false);
  if (body.is_discarded() || !body.is_object()) violation("response body is not a JSON object");
  return body;
}

}  // namespace biasloop::adapters::wire
