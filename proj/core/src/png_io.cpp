#include "capture/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "capture/error.hpp"

namespace capture {

namespace {

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
  cursor->offset += length;
}

void write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_callback(png_structp) {}

[[noreturn]] void error_callback(png_structp png, png_const_charp msg) {
  auto* buffer = static_cast<std::string*>(png_get_error_ptr(png));
  if (buffer) *buffer = msg;
  png_longjmp(png, 1);
}

void warning_callback(png_structp, png_const_charp) {}

std::vector<std::uint8_t> encode_rgb(const std::vector<std::uint8_t>& rgb, int height,
                                     int width) {
  std::vector<std::uint8_t> out;
  std::string message;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, error_callback, warning_callback);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed: " + message);
  }
  png_set_write_fn(png, &out, write_callback, flush_callback);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  for (int r = 0; r < height; ++r) {
    rows[r] = const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(r) * width * 3);
  }
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_file(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::uint8_t quantize_byte(double v) noexcept {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

ImageTensor quantize(const ImageTensor& img) {
  ImageTensor out = img;
  for (double& v : out.values()) v = quantize_byte(v) / 255.0;
  return out;
}

ImageTensor decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw FormatError("not a PNG stream");
  }
  std::string message;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, error_callback, warning_callback);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  ReadCursor cursor{bytes, 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG decode failed: " + message);
  }
  png_set_read_fn(png, &cursor, read_callback);
  png_read_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8 || color != PNG_COLOR_TYPE_RGB) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("expected 8-bit RGB PNG (bit depth " + std::to_string(depth) +
                      ", color type " + std::to_string(color) + ")");
  }
  png_bytepp rows = png_get_rows(png, info);
  std::vector<double> values(static_cast<std::size_t>(height) * width * 3);
  for (int r = 0; r < height; ++r) {
    for (int i = 0; i < width * 3; ++i) {
      values[static_cast<std::size_t>(r) * width * 3 + i] = rows[r][i] / 255.0;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return ImageTensor::from_values(height, width, std::move(values));
}

ImageTensor load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

std::vector<std::uint8_t> encode_png(const ImageTensor& img) {
  if (img.empty()) throw InvalidArgument("cannot encode an empty image");
  std::vector<std::uint8_t> rgb(img.size());
  auto values = img.values();
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = quantize_byte(values[i]);
  return encode_rgb(rgb, img.height(), img.width());
}

void save_image(const ImageTensor& img, const std::filesystem::path& path) {
  write_file(encode_png(img), path);
}

void save_mask(const std::vector<std::uint8_t>& mask, int side, const std::filesystem::path& path) {
  if (mask.size() != static_cast<std::size_t>(side) * side) {
    throw InvalidArgument("mask size does not match side");
  }
  std::vector<std::uint8_t> rgb(mask.size() * 3);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const std::uint8_t v = mask[i] ? 255 : 0;
    rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = v;
  }
  write_file(encode_rgb(rgb, side, side), path);
}

}  // namespace capture
