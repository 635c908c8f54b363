#pragma once

#include <variant>

#include "capture/image.hpp"

namespace capture {

struct ResizeParams {
  int height = 0;
  int width = 0;
};

struct BlurParams {
  double sigma = 1.0;  // pixels
};

struct JpegParams {
  int quality = 75;  // 1..100
};

// One of the preprocessing / robustness transforms: bilinear resize,
// Gaussian blur, or a JPEG encode/decode round trip.
struct ImageTransformSpec {
  std::variant<ResizeParams, BlurParams, JpegParams> params;

  static ImageTransformSpec resize(int height, int width) { return {ResizeParams{height, width}}; }
  static ImageTransformSpec blur(double sigma) { return {BlurParams{sigma}}; }
  static ImageTransformSpec jpeg(int quality) { return {JpegParams{quality}}; }

  // Throws InvalidArgument when the parameters violate their ranges.
  void validate() const;
};

ImageTensor apply_transform(const ImageTensor& img, const ImageTransformSpec& spec);

// Bilinear resampling with half-pixel centers (align_corners = false) and
// edge clamping.
ImageTensor resize_bilinear(const ImageTensor& img, int height, int width);

// Adjoint of resize_bilinear: maps a gradient w.r.t. the resized image back
// onto the source grid of shape `source`.
PixelField resize_bilinear_adjoint(const PixelField& grad, ImageShape source);

ImageTensor gaussian_blur(const ImageTensor& img, double sigma);

ImageTensor jpeg_requantize(const ImageTensor& img, int quality);

}  // namespace capture
