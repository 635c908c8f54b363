#include <doctest.h>

#include <cmath>

#include "capture/desk_pool.hpp"
#include "capture/ensemble.hpp"
#include "capture/patch.hpp"

using namespace capture;

namespace {

ImageTensor interior_image(int h, int w, Rng& rng) {
  ImageTensor img(h, w);
  for (double& v : img.values()) v = uniform(rng, 0.1, 0.9);
  return img;
}

double log_prob(const Classifier& m, const ImageTensor& img, int target) {
  return std::log(m.predict(img).probs[target]);
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST_CASE("input gradient matches central differences") {
  const double h = 1e-5;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto model = desk::tiny_model(seed, {8, 8}, 5);
    Rng rng(seed * 31);
    // Native size and a size that goes through the resize adjoint.
    for (ImageShape shape : {ImageShape{8, 8}, ImageShape{11, 13}}) {
      const auto img = interior_image(shape.height, shape.width, rng);
      const int target = static_cast<int>(seed % 5);
      const auto grad = model->input_gradient(img, target);
      for (int k = 0; k < 5; ++k) {
        const std::size_t i = uniform_index(rng, img.size());
        ImageTensor plus = img, minus = img;
        plus.values()[i] += h;
        minus.values()[i] -= h;
        const double fd = (log_prob(*model, plus, target) - log_prob(*model, minus, target)) / (2 * h);
        CAPTURE(seed);
        CAPTURE(i);
        CHECK(rel_error(grad.values()[i], fd) <= 1e-3);
      }
    }
  }
}

TEST_CASE("patch objective gradient matches central differences through placement") {
  const double h = 1e-5;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto model = desk::tiny_model(seed, {8, 8}, 5);
    Rng rng(seed * 17);
    const auto host = interior_image(16, 16, rng);
    const auto patch = interior_image(8, 8, rng);
    const PatchTransform t{uniform(rng, -40.0, 40.0), 0.6, 8.0, 8.0};
    const int target = static_cast<int>((seed + 2) % 5);
    const auto g = patch_objective_gradient(*model, patch, MaskShape::disc, host, t, target);
    // Only patch pixels that land on the host carry gradient; test those.
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < g.gradient.size(); ++i) {
      if (std::abs(g.gradient.values()[i]) > 1e-9) live.push_back(i);
    }
    REQUIRE(live.size() >= 5);
    for (int k = 0; k < 5; ++k) {
      const std::size_t i = live[uniform_index(rng, live.size())];
      ImageTensor plus = patch, minus = patch;
      plus.values()[i] += h;
      minus.values()[i] -= h;
      const double fd = (log_prob(*model, apply_patch(plus, MaskShape::disc, host, t), target) -
                         log_prob(*model, apply_patch(minus, MaskShape::disc, host, t), target)) /
                        (2 * h);
      CAPTURE(seed);
      CAPTURE(i);
      CHECK(rel_error(g.gradient.values()[i], fd) <= 1e-3);
    }
  }
}

TEST_CASE("patch pixels outside the mask get no gradient") {
  const auto model = desk::tiny_model(4, {8, 8}, 5);
  Rng rng(4);
  const auto host = interior_image(16, 16, rng);
  const auto patch = interior_image(8, 8, rng);
  const auto g = patch_objective_gradient(*model, patch, MaskShape::disc, host, {0.0, 0.8, 8.0, 8.0}, 1);
  const auto mask = make_mask(8, MaskShape::disc);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      if (mask[r * 8 + c]) continue;
      for (int ch = 0; ch < 3; ++ch) CHECK(g.gradient.at(r, c, ch) == 0.0);
    }
  }
}

TEST_CASE("ensemble gradient is the member mean") {
  ClassifierPool pool;
  pool.add(desk::tiny_model(1, {8, 8}, 5));
  pool.add(desk::tiny_model(2, {8, 8}, 5));
  EnsembleSpec spec;
  spec.member_ids = pool.ids();
  const Ensemble ens(pool, spec);
  Rng rng(8);
  const auto img = interior_image(8, 8, rng);
  const auto mg = ens.log_prob_gradient(img, 3);
  const auto g1 = pool.get(pool.ids()[0])->input_gradient(img, 3);
  const auto g2 = pool.get(pool.ids()[1])->input_gradient(img, 3);
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(mg.mean_gradient.values()[i] == doctest::Approx((g1.values()[i] + g2.values()[i]) / 2).epsilon(1e-12));
  }
  REQUIRE(mg.confidences.size() == 2);
  CHECK(mg.confidences[0] == doctest::Approx(pool.get(pool.ids()[0])->predict(img).probs[3]));
}
