#pragma once

#include <optional>
#include <string>
#include <vector>

#include "capture/image.hpp"
#include "capture/patch.hpp"

namespace capture {

struct CurveSet {
  std::string held_out;
  ScaleCurve held_out_curve;
  std::optional<ScaleCurve> white_box;  // pooled over the split's ensemble members
};

// Accepts either a patch-curve report CSV (split, role, scale, trials,
// successes, ...) or a single-curve CSV (scale, trials, successes,
// success_rate). Throws FormatError.
std::vector<CurveSet> curves_from_csv(const std::string& csv);

// Success rate against patch scale on [0, 1] x [0, 1]: held-out curve in red,
// white-box curve (when present) in blue, grid every 0.1.
ImageTensor plot_curve(const CurveSet& curves, int width = 400, int height = 300);

}  // namespace capture
