#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "capture/image.hpp"
#include "capture/rng.hpp"

namespace capture::desk {

// The desk-scale label space: ten procedurally drawn object classes.
inline constexpr std::array<std::string_view, 10> kClassNames = {
    "flagpole", "camera",        "hammer",    "theater-curtain", "ladder",
    "umbrella", "traffic-light", "dartboard", "window",          "balloon"};

inline constexpr int kClassCount = static_cast<int>(kClassNames.size());

// Draws one randomized instance of `label`. Geometry is defined in normalized
// coordinates and sampled at pixel centers, so a render at 32x32 equals the
// bilinear 96->32 downsample of a render at 96x96 (up to background noise).
ImageTensor render_object(int label, int height, int width, Rng& rng);

struct LabeledImage {
  ImageTensor image;
  int label = 0;
};

// `per_class` images of every class, rendered at `size` x `size`.
std::vector<LabeledImage> make_dataset(int per_class, int size, std::uint64_t seed);

}  // namespace capture::desk
