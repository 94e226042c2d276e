#pragma once

#include "anonypipe/image.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace anonypipe {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Decodes PNG or JPEG by sniffing the signature. Gray and RGBA inputs are converted to RGB.
Image8 decode_image(std::span<const std::uint8_t> bytes);
Image8 read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image8& img);
/// 8-bit gray PNG with 255 marking set pixels.
std::vector<std::uint8_t> encode_mask_png(const BitMask& mask);
BitMask decode_mask_png(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_jpeg(const Image8& img, int quality = 95);

/// Writes PNG or JPEG depending on the extension (.jpg/.jpeg → JPEG, otherwise PNG).
void write_image(const std::filesystem::path& path, const Image8& img);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace anonypipe
