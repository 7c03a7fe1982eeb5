#include "biasloop/adapters/codec.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <cstring>
#include <memory>

#include "biasloop/core/error.hpp"

namespace biasloop::adapters {

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  if (bytes.empty()) return out;
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                      static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::ProtocolViolation, "base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  if (text.empty()) return out;
  const int written = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                      static_cast<int>(text.size()));
  if (written < 0) throw Error(ErrorCode::ProtocolViolation, "malformed base64 payload");
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  std::size_t padding = 0;
  if (text.back() == '=') ++padding;
  if (text.size() >= 2 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(written) - padding);
  return out;
}

namespace {

struct WriteState {
  std::vector<std::uint8_t>* sink;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* state = static_cast<WriteState*>(png_get_io_ptr(png));
  state->sink->insert(state->sink->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

struct ReadState {
  const std::vector<std::uint8_t>* source;
  std::size_t offset;
};

void png_read_from_vector(png_structp png, png_bytep out, png_size_t length) {
  auto* state = static_cast<ReadState*>(png_get_io_ptr(png));
  if (state->offset + length > state->source->size()) png_error(png, "truncated PNG");
  std::memcpy(out, state->source->data() + state->offset, length);
  state->offset += length;
}

void png_warn_silently(png_structp, png_const_charp) {}

}  // namespace

// libpng reports errors through longjmp; state touched after setjmp lives on the heap.
Image encode_png(const RgbImage& raster) {
  if (raster.width <= 0 || raster.height <= 0 ||
      raster.rgb.size() != 3 * static_cast<std::size_t>(raster.width) * static_cast<std::size_t>(raster.height))
    throw Error(ErrorCode::InvalidArgument, "raster dimensions do not match its pixel buffer");

  auto image = std::make_unique<Image>();
  auto state = std::make_unique<WriteState>(WriteState{&image->png});
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn_silently);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::InvalidArgument, "PNG encoding failed");
  }
  png_set_write_fn(png, state.get(), png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width), static_cast<png_uint_32>(raster.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < raster.height; ++r) png_write_row(png, const_cast<png_bytep>(raster.pixel(r, 0)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return std::move(*image);
}

RgbImage decode_png(const Image& image) {
  if (image.png.size() < 8 || png_sig_cmp(image.png.data(), 0, 8) != 0)
    throw Error(ErrorCode::ProtocolViolation, "payload is not a PNG image");

  auto raster = std::make_unique<RgbImage>();
  auto state = std::make_unique<ReadState>(ReadState{&image.png, 0});
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn_silently);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::ProtocolViolation, "corrupt PNG payload");
  }
  png_set_read_fn(png, state.get(), png_read_from_vector);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  raster->width = static_cast<int>(png_get_image_width(png, info));
  raster->height = static_cast<int>(png_get_image_height(png, info));
  raster->rgb.resize(3 * static_cast<std::size_t>(raster->width) * static_cast<std::size_t>(raster->height));
  for (int r = 0; r < raster->height; ++r) png_read_row(png, raster->pixel(r, 0), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return std::move(*raster);
}

std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx.get(), header.data(), header.size());
  EVP_DigestUpdate(ctx.get(), content.data(), content.size());
  EVP_DigestFinal_ex(ctx.get(), digest, &length);

  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace biasloop::adapters
