#include "capture/desk_data.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "capture/error.hpp"

namespace capture::desk {

namespace {

struct Color {
  double r, g, b;
};

// Point-in-shape predicate over normalized (x right, y down) coordinates.
using Region = std::function<bool(double x, double y)>;

struct Layer {
  Region region;
  std::function<Color(double x, double y)> paint;
};

struct Frame {
  double cx, cy, scale, angle;

  // Maps image coordinates into the object's local frame centered at 0.
  std::pair<double, double> local(double x, double y) const {
    const double dx = (x - cx) / scale;
    const double dy = (y - cy) / scale;
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * dx + s * dy, -s * dx + c * dy};
  }
};

Color jitter(Color c, Rng& rng, double amount) {
  auto j = [&](double v) { return std::clamp(v + uniform(rng, -amount, amount), 0.0, 1.0); };
  return {j(c.r), j(c.g), j(c.b)};
}

Color bright(Rng& rng) {
  static constexpr std::array<Color, 6> palette{{{0.9, 0.15, 0.15},
                                                 {0.15, 0.35, 0.9},
                                                 {0.95, 0.8, 0.1},
                                                 {0.1, 0.7, 0.25},
                                                 {0.85, 0.3, 0.8},
                                                 {0.95, 0.5, 0.1}}};
  return jitter(palette[uniform_index(rng, palette.size())], rng, 0.08);
}

Layer solid(Region region, Color c) {
  return {std::move(region), [c](double, double) { return c; }};
}

Region rect(const Frame& f, double x0, double y0, double x1, double y1) {
  return [=](double x, double y) {
    auto [lx, ly] = f.local(x, y);
    return lx >= x0 && lx <= x1 && ly >= y0 && ly <= y1;
  };
}

Region disc(const Frame& f, double cx, double cy, double r) {
  return [=](double x, double y) {
    auto [lx, ly] = f.local(x, y);
    return (lx - cx) * (lx - cx) + (ly - cy) * (ly - cy) <= r * r;
  };
}

Region ellipse(const Frame& f, double cx, double cy, double rx, double ry) {
  return [=](double x, double y) {
    auto [lx, ly] = f.local(x, y);
    const double a = (lx - cx) / rx, b = (ly - cy) / ry;
    return a * a + b * b <= 1.0;
  };
}

Region ring(const Frame& f, double cx, double cy, double r0, double r1) {
  return [=](double x, double y) {
    auto [lx, ly] = f.local(x, y);
    const double d2 = (lx - cx) * (lx - cx) + (ly - cy) * (ly - cy);
    return d2 >= r0 * r0 && d2 <= r1 * r1;
  };
}

std::vector<Layer> flagpole(const Frame& f, Rng& rng) {
  const Color pole = jitter({0.85, 0.85, 0.85}, rng, 0.1);
  const Color flag = bright(rng);
  const double w = uniform(rng, 0.025, 0.04);
  const double fh = uniform(rng, 0.15, 0.22), fw = uniform(rng, 0.25, 0.35);
  const double side = uniform01(rng) < 0.5 ? 1.0 : -1.0;
  std::vector<Layer> layers;
  layers.push_back(solid(rect(f, -w, -0.42, w, 0.45), pole));
  if (side > 0) {
    layers.push_back(solid(rect(f, w, -0.4, w + fw, -0.4 + fh), flag));
  } else {
    layers.push_back(solid(rect(f, -w - fw, -0.4, -w, -0.4 + fh), flag));
  }
  layers.push_back(solid(disc(f, 0.0, -0.44, w * 1.6), jitter({0.9, 0.75, 0.2}, rng, 0.05)));
  return layers;
}

std::vector<Layer> camera(const Frame& f, Rng& rng) {
  const Color body = jitter({0.15, 0.15, 0.17}, rng, 0.06);
  const double bw = uniform(rng, 0.34, 0.42), bh = uniform(rng, 0.2, 0.26);
  const double lr = bh * uniform(rng, 0.65, 0.8);
  std::vector<Layer> layers;
  layers.push_back(solid(rect(f, -bw, -bh, bw, bh), body));
  layers.push_back(solid(rect(f, -bw * 0.5, -bh - 0.08, -bw * 0.1, -bh), body));
  layers.push_back(solid(disc(f, 0.0, 0.0, lr), jitter({0.75, 0.75, 0.78}, rng, 0.05)));
  layers.push_back(solid(disc(f, 0.0, 0.0, lr * 0.65), jitter({0.05, 0.08, 0.2}, rng, 0.04)));
  layers.push_back(solid(disc(f, bw * 0.75, -bh * 0.6, 0.035), jitter({0.9, 0.2, 0.1}, rng, 0.05)));
  return layers;
}

std::vector<Layer> hammer(const Frame& f, Rng& rng) {
  const Color wood = jitter({0.55, 0.33, 0.15}, rng, 0.07);
  const Color steel = jitter({0.55, 0.57, 0.6}, rng, 0.08);
  const double hw = uniform(rng, 0.035, 0.05);
  std::vector<Layer> layers;
  layers.push_back(solid(rect(f, -hw, -0.22, hw, 0.45), wood));
  layers.push_back(solid(rect(f, -0.28, -0.4, 0.22, -0.22), steel));
  layers.push_back(solid(rect(f, 0.22, -0.36, 0.3, -0.26), steel));
  return layers;
}

std::vector<Layer> curtain(const Frame& f, Rng& rng) {
  const Color base = jitter({0.7, 0.05, 0.08}, rng, 0.08);
  const double folds = uniform(rng, 7.0, 11.0);
  const double phase = uniform(rng, 0.0, 6.28);
  const double gap = uniform(rng, 0.04, 0.14);
  std::vector<Layer> layers;
  layers.push_back({[=](double x, double y) {
                      auto [lx, ly] = f.local(x, y);
                      return std::abs(lx) >= gap && ly > -0.75 && ly < 0.75 && std::abs(lx) < 0.75;
                    },
                    [=](double x, double) {
                      const double shade = 0.55 + 0.45 * std::abs(std::sin(folds * 3.14159 * x + phase));
                      return Color{base.r * shade, base.g * shade, base.b * shade};
                    }});
  layers.push_back(solid(rect(f, -0.75, -0.75, 0.75, -0.52), {base.r * 0.6, 0.02, 0.03}));
  layers.push_back(solid(rect(f, -0.75, -0.56, 0.75, -0.52), jitter({0.85, 0.7, 0.2}, rng, 0.05)));
  return layers;
}

std::vector<Layer> ladder(const Frame& f, Rng& rng) {
  const Color c = uniform01(rng) < 0.5 ? jitter({0.6, 0.4, 0.2}, rng, 0.07)
                                       : jitter({0.75, 0.75, 0.78}, rng, 0.07);
  const double half = uniform(rng, 0.14, 0.2), w = uniform(rng, 0.025, 0.035);
  const int rungs = 4 + static_cast<int>(uniform_index(rng, 3));
  std::vector<Layer> layers;
  layers.push_back(solid(rect(f, -half - w, -0.45, -half + w, 0.45), c));
  layers.push_back(solid(rect(f, half - w, -0.45, half + w, 0.45), c));
  for (int i = 0; i < rungs; ++i) {
    const double y = -0.38 + 0.76 * (i + 0.5) / rungs;
    layers.push_back(solid(rect(f, -half, y - w * 0.8, half, y + w * 0.8), c));
  }
  return layers;
}

std::vector<Layer> umbrella(const Frame& f, Rng& rng) {
  const Color canopy = bright(rng);
  const Color handle = jitter({0.2, 0.15, 0.12}, rng, 0.05);
  const double r = uniform(rng, 0.34, 0.42);
  std::vector<Layer> layers;
  layers.push_back(solid(
      [=](double x, double y) {
        auto [lx, ly] = f.local(x, y);
        return ly <= -0.05 && lx * lx + (ly + 0.05) * (ly + 0.05) <= r * r;
      },
      canopy));
  layers.push_back(solid(rect(f, -0.02, -0.05, 0.02, 0.35), handle));
  layers.push_back(solid(
      [=](double x, double y) {
        auto [lx, ly] = f.local(x, y);
        const double d2 = (lx + 0.06) * (lx + 0.06) + (ly - 0.35) * (ly - 0.35);
        return ly >= 0.35 && d2 >= 0.04 * 0.04 && d2 <= 0.08 * 0.08;
      },
      handle));
  return layers;
}

std::vector<Layer> traffic_light(const Frame& f, Rng& rng) {
  const Color box = jitter({0.1, 0.1, 0.1}, rng, 0.05);
  const double hw = uniform(rng, 0.13, 0.16);
  const double lr = hw * 0.72;
  std::vector<Layer> layers;
  layers.push_back(solid(rect(f, -hw, -0.42, hw, 0.42), box));
  layers.push_back(solid(rect(f, -0.025, 0.42, 0.025, 0.5), jitter({0.4, 0.4, 0.4}, rng, 0.05)));
  const std::array<Color, 3> lamps{{{0.95, 0.1, 0.05}, {0.95, 0.75, 0.05}, {0.1, 0.85, 0.2}}};
  for (int i = 0; i < 3; ++i) {
    layers.push_back(solid(disc(f, 0.0, -0.27 + 0.27 * i, lr), jitter(lamps[i], rng, 0.05)));
  }
  return layers;
}

std::vector<Layer> dartboard(const Frame& f, Rng& rng) {
  const double r = uniform(rng, 0.36, 0.44);
  const Color a = jitter({0.08, 0.08, 0.08}, rng, 0.04);
  const Color b = jitter({0.92, 0.88, 0.75}, rng, 0.04);
  const Color red = jitter({0.85, 0.1, 0.1}, rng, 0.05);
  const Color green = jitter({0.1, 0.6, 0.2}, rng, 0.05);
  std::vector<Layer> layers;
  const std::array<Color, 6> bands{a, red, b, green, b, red};
  for (int i = 0; i < 6; ++i) {
    const double r1 = r * (6 - i) / 6.0;
    layers.push_back(solid(disc(f, 0.0, 0.0, r1), bands[i]));
  }
  return layers;
}

std::vector<Layer> window(const Frame& f, Rng& rng) {
  const Color frame = uniform01(rng) < 0.5 ? jitter({0.95, 0.95, 0.95}, rng, 0.04)
                                           : jitter({0.45, 0.28, 0.15}, rng, 0.05);
  const Color glass = jitter({0.55, 0.78, 0.95}, rng, 0.06);
  const double hw = uniform(rng, 0.3, 0.38), hh = uniform(rng, 0.34, 0.42), t = 0.04;
  std::vector<Layer> layers;
  layers.push_back(solid(rect(f, -hw, -hh, hw, hh), frame));
  layers.push_back(solid(rect(f, -hw + t, -hh + t, hw - t, hh - t), glass));
  layers.push_back(solid(rect(f, -t * 0.5, -hh, t * 0.5, hh), frame));
  layers.push_back(solid(rect(f, -hw, -t * 0.5, hw, t * 0.5), frame));
  return layers;
}

std::vector<Layer> balloon(const Frame& f, Rng& rng) {
  const Color skin = bright(rng);
  const double rx = uniform(rng, 0.2, 0.25), ry = rx * uniform(rng, 1.15, 1.3);
  std::vector<Layer> layers;
  layers.push_back(solid(
      [=](double x, double y) {
        auto [lx, ly] = f.local(x, y);
        return ly > -0.1 + ry && ly < 0.48 &&
               std::abs(lx - 0.03 * std::sin(ly * 25.0)) < 0.012;
      },
      jitter({0.3, 0.3, 0.3}, rng, 0.05)));
  layers.push_back(solid(ellipse(f, 0.0, -0.1, rx, ry), skin));
  layers.push_back(solid(ellipse(f, -rx * 0.35, -0.1 - ry * 0.4, rx * 0.18, ry * 0.14),
                         {std::min(1.0, skin.r + 0.3), std::min(1.0, skin.g + 0.3),
                          std::min(1.0, skin.b + 0.3)}));
  return layers;
}

}  // namespace

ImageTensor render_object(int label, int height, int width, Rng& rng) {
  if (label < 0 || label >= kClassCount) throw InvalidArgument("desk label out of range");
  // Muted two-tone vertical gradient background.
  const Color top = {uniform(rng, 0.35, 0.8), uniform(rng, 0.4, 0.85), uniform(rng, 0.4, 0.9)};
  const Color bottom = {uniform(rng, 0.3, 0.7), uniform(rng, 0.35, 0.7), uniform(rng, 0.25, 0.6)};
  const double angle_limit = label == 3 ? 0.05 : 0.3;
  Frame frame{0.5 + uniform(rng, -0.08, 0.08), 0.5 + uniform(rng, -0.08, 0.08),
              uniform(rng, 0.8, 1.05), uniform(rng, -angle_limit, angle_limit)};

  std::vector<Layer> layers;
  switch (label) {
    case 0: layers = flagpole(frame, rng); break;
    case 1: layers = camera(frame, rng); break;
    case 2: layers = hammer(frame, rng); break;
    case 3: layers = curtain(frame, rng); break;
    case 4: layers = ladder(frame, rng); break;
    case 5: layers = umbrella(frame, rng); break;
    case 6: layers = traffic_light(frame, rng); break;
    case 7: layers = dartboard(frame, rng); break;
    case 8: layers = window(frame, rng); break;
    default: layers = balloon(frame, rng); break;
  }

  const double noise = uniform(rng, 0.0, 0.04);
  ImageTensor img(height, width);
  for (int r = 0; r < height; ++r) {
    const double y = (r + 0.5) / height;
    for (int c = 0; c < width; ++c) {
      const double x = (c + 0.5) / width;
      Color px{top.r * (1 - y) + bottom.r * y, top.g * (1 - y) + bottom.g * y,
               top.b * (1 - y) + bottom.b * y};
      for (const auto& layer : layers) {
        if (layer.region(x, y)) px = layer.paint(x, y);
      }
      img.at(r, c, 0) = std::clamp(px.r + uniform(rng, -noise, noise), 0.0, 1.0);
      img.at(r, c, 1) = std::clamp(px.g + uniform(rng, -noise, noise), 0.0, 1.0);
      img.at(r, c, 2) = std::clamp(px.b + uniform(rng, -noise, noise), 0.0, 1.0);
    }
  }
  return img;
}

std::vector<LabeledImage> make_dataset(int per_class, int size, std::uint64_t seed) {
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(per_class) * kClassCount);
  for (int i = 0; i < per_class; ++i) {
    for (int label = 0; label < kClassCount; ++label) {
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i) * kClassCount + label));
      out.push_back({render_object(label, size, size, rng), label});
    }
  }
  return out;
}

}  // namespace capture::desk
