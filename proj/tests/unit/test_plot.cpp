#include <doctest.h>

#include "capture/error.hpp"
#include "capture/plot.hpp"

using namespace capture;

namespace {

int count_pixels(const ImageTensor& img, double r, double g, double b) {
  int n = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      n += img.at(y, x, 0) == r && img.at(y, x, 1) == g && img.at(y, x, 2) == b;
    }
  }
  return n;
}

}  // namespace

TEST_CASE("report csv splits into held-out and pooled white-box curves") {
  const std::string csv =
      "split,target_class,model,role,scale,trials,successes,skipped,success_rate\n"
      "m1,0,m1,held-out,0.5,10,2,0,0.2\n"
      "m1,0,m2,white-box,0.5,10,9,0,0.9\n"
      "m1,0,m3,white-box,0.5,10,7,0,0.7\n"
      "m1,0,m1,held-out,0.2,10,1,0,0.1\n"
      "m2,0,m2,held-out,0.2,8,4,2,0.5\n";
  const auto sets = curves_from_csv(csv);
  REQUIRE(sets.size() == 2);
  CHECK(sets[0].held_out == "m1");
  REQUIRE(sets[0].held_out_curve.points.size() == 2);
  CHECK(sets[0].held_out_curve.points[0].scale == 0.2);
  CHECK(sets[0].held_out_curve.points[1].successes == 2);
  REQUIRE(sets[0].white_box.has_value());
  CHECK(sets[0].white_box->points[0].successes == 16);
  CHECK(sets[0].white_box->points[0].trials == 20);
  CHECK_FALSE(sets[1].white_box.has_value());
}

TEST_CASE("single curve csv") {
  const auto sets = curves_from_csv("scale,trials,successes,success_rate\n0.1,4,0,0\n1.0,4,4,1\n");
  REQUIRE(sets.size() == 1);
  CHECK(sets[0].held_out_curve.points.size() == 2);
  CHECK_THROWS_AS(curves_from_csv(""), FormatError);
  CHECK_THROWS_AS(curves_from_csv("scale,trials\n0.1,4\n"), FormatError);
  CHECK_THROWS_AS(curves_from_csv("scale,trials,successes\n0.1,x,1\n"), FormatError);
  CHECK_THROWS_AS(curves_from_csv("scale,trials,successes\n0.1,4\n"), FormatError);
  CHECK_THROWS_AS(curves_from_csv("scale,trials,successes\n"), FormatError);
}

TEST_CASE("plot draws the requested size with one line per role") {
  auto sets = curves_from_csv(
      "split,role,scale,trials,successes\nm,held-out,0.2,10,1\nm,held-out,0.8,10,6\n"
      "m,white-box,0.2,10,5\nm,white-box,0.8,10,10\n");
  const auto img = plot_curve(sets[0], 400, 300);
  CHECK(img.height() == 300);
  CHECK(img.width() == 400);
  CHECK(count_pixels(img, 1.0, 1.0, 1.0) > 400 * 300 / 2);
  const int red = count_pixels(img, 0.85, 0.15, 0.15);
  const int blue = count_pixels(img, 0.15, 0.35, 0.85);
  CHECK(red > 50);
  CHECK(blue > 50);

  sets[0].white_box.reset();
  CHECK(count_pixels(plot_curve(sets[0], 400, 300), 0.15, 0.35, 0.85) == 0);
  CHECK_THROWS_AS(plot_curve(sets[0], 10, 10), InvalidArgument);
}
