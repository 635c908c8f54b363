#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "capture/image.hpp"

namespace capture {

// Reads an 8-bit RGB PNG; values are stored bytes divided by 255.
// Throws IoError for a missing/unreadable file and FormatError for anything
// that is not 8-bit RGB.
ImageTensor load_image(const std::filesystem::path& path);
ImageTensor decode_png(std::span<const std::uint8_t> bytes);

// Quantizes with round-half-up (byte = floor(v * 255 + 0.5)) and writes an
// 8-bit RGB PNG without ancillary chunks.
void save_image(const ImageTensor& img, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const ImageTensor& img);

std::uint8_t quantize_byte(double v) noexcept;

// The image a PNG round trip would return: every value snapped to k / 255.
ImageTensor quantize(const ImageTensor& img);

// Grayscale 0/1 mask written as an RGB PNG (0 -> black, 1 -> white).
void save_mask(const std::vector<std::uint8_t>& mask, int side, const std::filesystem::path& path);

}  // namespace capture
