#include <doctest.h>

#include <cmath>

#include "capture/error.hpp"
#include "capture/rng.hpp"
#include "capture/transform.hpp"

using namespace capture;

namespace {

ImageTensor random_image(int h, int w, Rng& rng) {
  ImageTensor img(h, w);
  for (double& v : img.values()) v = uniform01(rng);
  return img;
}

PixelField random_field(int h, int w, Rng& rng) {
  PixelField f(h, w);
  for (double& v : f.values()) v = uniform(rng, -1.0, 1.0);
  return f;
}

}  // namespace

TEST_CASE("image values outside [0,1] are rejected") {
  CHECK_THROWS_AS(ImageTensor::from_values(1, 1, {0.0, 0.5, 1.5}), InvalidArgument);
  CHECK_THROWS_AS(ImageTensor::from_values(1, 2, {0.0, 0.5, 1.0}), InvalidArgument);
  CHECK_NOTHROW(ImageTensor::from_values(1, 1, {0.0, 0.5, 1.0}));
}

TEST_CASE("clamp restores the unit range") {
  ImageTensor img(2, 2);
  img.at(0, 0, 0) = -0.2;
  img.at(1, 1, 2) = 1.7;
  CHECK_FALSE(img.in_range());
  img.clamp();
  CHECK(img.in_range());
  CHECK(img.at(0, 0, 0) == 0.0);
  CHECK(img.at(1, 1, 2) == 1.0);
}

TEST_CASE("resize to the same size is the identity") {
  Rng rng(3);
  const auto img = random_image(7, 5, rng);
  CHECK(max_abs_diff(resize_bilinear(img, 7, 5), img) < 1e-12);
}

TEST_CASE("resize keeps constant images constant") {
  const ImageTensor img(9, 13, 0.37);
  for (auto [h, w] : {std::pair{4, 4}, std::pair{20, 11}, std::pair{1, 1}}) {
    const auto r = resize_bilinear(img, h, w);
    for (double v : r.values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
  }
}

TEST_CASE("resize adjoint satisfies the dot-product identity") {
  // <R x, g> == <x, R^T g> for random x, g over several size pairs.
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int h0 = 2 + static_cast<int>(uniform_index(rng, 30)), w0 = 2 + static_cast<int>(uniform_index(rng, 30));
    const int h1 = 1 + static_cast<int>(uniform_index(rng, 30)), w1 = 1 + static_cast<int>(uniform_index(rng, 30));
    const auto x = random_image(h0, w0, rng);
    const auto g = random_field(h1, w1, rng);
    const auto rx = resize_bilinear(x, h1, w1);
    const auto rtg = resize_bilinear_adjoint(g, x.shape());
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) lhs += rx.values()[i] * g.values()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.values()[i] * rtg.values()[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("blur preserves constants and the unit range") {
  const ImageTensor flat(10, 10, 0.6);
  for (double v : gaussian_blur(flat, 1.5).values()) CHECK(v == doctest::Approx(0.6));
  Rng rng(5);
  CHECK(gaussian_blur(random_image(12, 9, rng), 2.0).in_range());
}

TEST_CASE("transform parameters are validated") {
  CHECK_THROWS_AS(ImageTransformSpec::jpeg(0).validate(), InvalidArgument);
  CHECK_THROWS_AS(ImageTransformSpec::jpeg(101).validate(), InvalidArgument);
  CHECK_THROWS_AS(ImageTransformSpec::resize(0, 4).validate(), InvalidArgument);
  CHECK_THROWS_AS(ImageTransformSpec::blur(-1.0).validate(), InvalidArgument);
  CHECK_NOTHROW(ImageTransformSpec::jpeg(75).validate());
}

TEST_CASE("jpeg round trip stays close on smooth images") {
  ImageTensor img(32, 32);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      img.at(r, c, 0) = r / 31.0;
      img.at(r, c, 1) = c / 31.0;
      img.at(r, c, 2) = 0.5;
    }
  }
  const auto out = apply_transform(img, ImageTransformSpec::jpeg(95));
  CHECK(out.shape() == img.shape());
  CHECK(max_abs_diff(out, img) < 0.08);
}
