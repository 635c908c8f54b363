#include "capture/transform.hpp"

#include <cstdio>
#include <cstdlib>

#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <string>
#include <vector>

#include "capture/error.hpp"
#include "capture/png_io.hpp"

namespace capture {

namespace {

// Source taps for one output coordinate under half-pixel-center bilinear mapping.
struct Tap {
  int lo;
  int hi;
  double w_hi;
};

std::vector<Tap> taps(int in, int out) {
  std::vector<Tap> result(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in - 1);
    result[d] = {lo, hi, src - lo};
  }
  return result;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

}  // namespace

void ImageTransformSpec::validate() const {
  if (const auto* r = std::get_if<ResizeParams>(&params)) {
    if (r->height <= 0 || r->width <= 0) {
      throw InvalidArgument("resize target must be positive, got " + std::to_string(r->height) +
                            "x" + std::to_string(r->width));
    }
  } else if (const auto* b = std::get_if<BlurParams>(&params)) {
    if (!(b->sigma > 0.0)) throw InvalidArgument("blur sigma must be > 0");
  } else if (const auto* j = std::get_if<JpegParams>(&params)) {
    if (j->quality < 1 || j->quality > 100) throw InvalidArgument("jpeg quality must be in [1,100]");
  }
}

ImageTensor apply_transform(const ImageTensor& img, const ImageTransformSpec& spec) {
  spec.validate();
  if (img.empty()) throw InvalidArgument("apply_transform on empty image");
  if (const auto* r = std::get_if<ResizeParams>(&spec.params)) {
    return resize_bilinear(img, r->height, r->width);
  }
  if (const auto* b = std::get_if<BlurParams>(&spec.params)) return gaussian_blur(img, b->sigma);
  return jpeg_requantize(img, std::get<JpegParams>(spec.params).quality);
}

ImageTensor resize_bilinear(const ImageTensor& img, int height, int width) {
  if (height <= 0 || width <= 0) throw InvalidArgument("resize target must be positive");
  if (img.height() == height && img.width() == width) return img;
  const auto ty = taps(img.height(), height);
  const auto tx = taps(img.width(), width);
  ImageTensor out(height, width);
  for (int r = 0; r < height; ++r) {
    const Tap& y = ty[r];
    for (int c = 0; c < width; ++c) {
      const Tap& x = tx[c];
      for (int ch = 0; ch < 3; ++ch) {
        const double top = img.at(y.lo, x.lo, ch) * (1.0 - x.w_hi) + img.at(y.lo, x.hi, ch) * x.w_hi;
        const double bot = img.at(y.hi, x.lo, ch) * (1.0 - x.w_hi) + img.at(y.hi, x.hi, ch) * x.w_hi;
        out.at(r, c, ch) = std::clamp(top * (1.0 - y.w_hi) + bot * y.w_hi, 0.0, 1.0);
      }
    }
  }
  return out;
}

PixelField resize_bilinear_adjoint(const PixelField& grad, ImageShape source) {
  if (grad.height() == source.height && grad.width() == source.width) return grad;
  const auto ty = taps(source.height, grad.height());
  const auto tx = taps(source.width, grad.width());
  PixelField out(source.height, source.width);
  for (int r = 0; r < grad.height(); ++r) {
    const Tap& y = ty[r];
    for (int c = 0; c < grad.width(); ++c) {
      const Tap& x = tx[c];
      for (int ch = 0; ch < 3; ++ch) {
        const double g = grad.at(r, c, ch);
        out.at(y.lo, x.lo, ch) += g * (1.0 - y.w_hi) * (1.0 - x.w_hi);
        out.at(y.lo, x.hi, ch) += g * (1.0 - y.w_hi) * x.w_hi;
        out.at(y.hi, x.lo, ch) += g * y.w_hi * (1.0 - x.w_hi);
        out.at(y.hi, x.hi, ch) += g * y.w_hi * x.w_hi;
      }
    }
  }
  return out;
}

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("blur sigma must be > 0");
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int h = img.height();
  const int w = img.width();
  ImageTensor tmp(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[i + radius] * img.at(r, std::clamp(c + i, 0, w - 1), ch);
        }
        tmp.at(r, c, ch) = acc;
      }
    }
  }
  ImageTensor out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[i + radius] * tmp.at(std::clamp(r + i, 0, h - 1), c, ch);
        }
        out.at(r, c, ch) = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  return out;
}

ImageTensor jpeg_requantize(const ImageTensor& img, int quality) {
  if (quality < 1 || quality > 100) throw InvalidArgument("jpeg quality must be in [1,100]");
  const int h = img.height();
  const int w = img.width();
  std::vector<std::uint8_t> rgb(img.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = quantize_byte(img.values()[i]);

  unsigned char* encoded = nullptr;
  unsigned long encoded_size = 0;
  {
    jpeg_compress_struct cinfo{};
    JpegErrorManager err{};
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
      jpeg_destroy_compress(&cinfo);
      std::free(encoded);
      throw FormatError(std::string("JPEG encode failed: ") + err.message);
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, &encoded, &encoded_size);
    cinfo.image_width = static_cast<JDIMENSION>(w);
    cinfo.image_height = static_cast<JDIMENSION>(h);
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
      JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * w * 3;
      jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
  }

  std::vector<double> values(img.size());
  {
    jpeg_decompress_struct dinfo{};
    JpegErrorManager err{};
    dinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
      jpeg_destroy_decompress(&dinfo);
      std::free(encoded);
      throw FormatError(std::string("JPEG decode failed: ") + err.message);
    }
    jpeg_create_decompress(&dinfo);
    jpeg_mem_src(&dinfo, encoded, encoded_size);
    jpeg_read_header(&dinfo, TRUE);
    dinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&dinfo);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 3);
    while (dinfo.output_scanline < dinfo.output_height) {
      const auto r = dinfo.output_scanline;
      JSAMPROW ptr = row.data();
      jpeg_read_scanlines(&dinfo, &ptr, 1);
      for (int i = 0; i < w * 3; ++i) values[static_cast<std::size_t>(r) * w * 3 + i] = row[i] / 255.0;
    }
    jpeg_finish_decompress(&dinfo);
    jpeg_destroy_decompress(&dinfo);
  }
  std::free(encoded);
  return ImageTensor::from_values(h, w, std::move(values));
}

}  // namespace capture
