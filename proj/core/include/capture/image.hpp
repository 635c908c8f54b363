#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace capture {

struct ImageShape {
  int height = 0;
  int width = 0;
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

// Unconstrained real field laid out like an image (row-major, interleaved RGB).
// Used for gradients and other signed quantities.
class PixelField {
 public:
  static constexpr int kChannels = 3;

  PixelField() = default;
  PixelField(int height, int width, double fill = 0.0);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  ImageShape shape() const noexcept { return {height_, width_}; }
  std::size_t size() const noexcept { return values_.size(); }

  double& at(int row, int col, int ch) { return values_[index(row, col, ch)]; }
  double at(int row, int col, int ch) const { return values_[index(row, col, ch)]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::size_t index(int row, int col, int ch) const noexcept {
    return (static_cast<std::size_t>(row) * width_ + col) * kChannels + ch;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

// H x W x 3 image with unit intensities. Every value lies in [0, 1];
// constructors check this, mutators leave it to the caller (`clamp()` restores it).
class ImageTensor {
 public:
  static constexpr int kChannels = 3;

  ImageTensor() = default;
  ImageTensor(int height, int width, double fill = 0.0);

  // Throws InvalidArgument on a size mismatch or any value outside [0, 1].
  static ImageTensor from_values(int height, int width, std::vector<double> values);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  ImageShape shape() const noexcept { return {height_, width_}; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& at(int row, int col, int ch) { return values_[index(row, col, ch)]; }
  double at(int row, int col, int ch) const { return values_[index(row, col, ch)]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool in_range() const noexcept;
  void clamp() noexcept;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(int row, int col, int ch) const noexcept {
    return (static_cast<std::size_t>(row) * width_ + col) * kChannels + ch;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

// Largest absolute per-value difference; shapes must match.
double max_abs_diff(const ImageTensor& a, const ImageTensor& b);

}  // namespace capture
