#pragma once

// JSON bodies of the four capability endpoints.
//
//   POST /generate  {prompt, seed, params}            -> {image}
//   POST /describe  {prompt, image, params}           -> {text, tokens?}
//   POST /embed     {modality, text | image}          -> {embedding}
//   POST /saliency  {image, prompt, token_index}      -> {height, width, values}
//   any failure                                       -> {code, message}
//
// Images are base64-encoded PNG, vectors arrays of doubles, heatmaps row-major.
// Decoders throw ProtocolViolation on missing or mistyped fields.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "biasloop/adapters/backend.hpp"

namespace biasloop::adapters::wire {

using nlohmann::json;

json encode_image(const Image& image);
Image decode_image(const json& value, const char* field);

struct GenerateRequest {
  std::string prompt;
  std::uint64_t seed = 0;
  json params = json::object();
};
json to_json(const GenerateRequest& request);
GenerateRequest parse_generate_request(const json& body);
json generate_response(const Image& image);
Image parse_generate_response(const json& body);

struct DescribeRequest {
  std::string prompt;
  Image image;
  json params = json::object();
};
json to_json(const DescribeRequest& request);
DescribeRequest parse_describe_request(const json& body);
json describe_response(const Description& description);
Description parse_describe_response(const json& body);

json embed_request(const EmbedPayload& payload);
EmbedPayload parse_embed_request(const json& body);
json embed_response(const Embedding& embedding);
Embedding parse_embed_response(const json& body);

struct SaliencyRequest {
  Image image;
  std::string prompt;
  std::size_t token_index = 0;
};
json to_json(const SaliencyRequest& request);
SaliencyRequest parse_saliency_request(const json& body);
json heatmap_to_json(const Heatmap& heatmap);
Heatmap heatmap_from_json(const json& body);

json error_body(std::string_view code, std::string_view message);

// Parses text as a JSON object; ProtocolViolation otherwise.
json parse_object(const std::string& text);

}  // namespace biasloop::adapters::wire
