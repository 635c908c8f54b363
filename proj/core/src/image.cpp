#include "capture/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "capture/error.hpp"

namespace capture {

namespace {

void check_dims(int height, int width) {
  if (height <= 0 || width <= 0) {
    throw InvalidArgument("image dimensions must be positive, got " + std::to_string(height) +
                          "x" + std::to_string(width));
  }
}

}  // namespace

PixelField::PixelField(int height, int width, double fill) : height_(height), width_(width) {
  check_dims(height, width);
  values_.assign(static_cast<std::size_t>(height) * width * kChannels, fill);
}

ImageTensor::ImageTensor(int height, int width, double fill) : height_(height), width_(width) {
  check_dims(height, width);
  if (!(fill >= 0.0 && fill <= 1.0)) throw InvalidArgument("fill value outside [0,1]");
  values_.assign(static_cast<std::size_t>(height) * width * kChannels, fill);
}

ImageTensor ImageTensor::from_values(int height, int width, std::vector<double> values) {
  check_dims(height, width);
  if (values.size() != static_cast<std::size_t>(height) * width * kChannels) {
    throw InvalidArgument("value count does not match " + std::to_string(height) + "x" +
                          std::to_string(width) + "x3");
  }
  ImageTensor img;
  img.height_ = height;
  img.width_ = width;
  img.values_ = std::move(values);
  if (!img.in_range()) throw InvalidArgument("image values must lie in [0,1]");
  return img;
}

bool ImageTensor::in_range() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

void ImageTensor::clamp() noexcept {
  for (double& v : values_) v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
}

double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  if (a.shape() != b.shape()) throw InvalidArgument("max_abs_diff: shape mismatch");
  double m = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
  return m;
}

}  // namespace capture
