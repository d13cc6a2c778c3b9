#include <doctest.h>

#include <random>
#include <vector>

#include "pspred/geometry.hpp"

using namespace pspred;

TEST_CASE("clipped length through a rectangle") {
  const Rect r{10, 10, 30, 30};
  CHECK(clipped_length({0, 20}, {40, 20}, r) == doctest::Approx(20.0));
  CHECK(clipped_length({0, 0}, {40, 40}, r) == doctest::Approx(20.0 * std::sqrt(2.0)));
  CHECK(clipped_length({0, 0}, {5, 40}, r) == 0.0);
  CHECK(clipped_length({20, 20}, {40, 20}, r) == doctest::Approx(10.0));
  CHECK(clipped_length({12, 12}, {14, 15}, r) == doctest::Approx(std::hypot(2.0, 3.0)));
}

TEST_CASE("clipped length is symmetric bit for bit") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  const Rect r{10, 15, 32, 40};
  for (int i = 0; i < 1000; ++i) {
    const Point a{u(rng), u(rng)};
    const Point b{u(rng), u(rng)};
    CHECK(clipped_length(a, b, r) == clipped_length(b, a, r));
  }
}

TEST_CASE("rectangle overlap") {
  CHECK(interiors_overlap({0, 0, 10, 10}, {5, 5, 15, 15}));
  CHECK_FALSE(interiors_overlap({0, 0, 10, 10}, {10, 0, 20, 10}));
  CHECK(overlap_area({0, 0, 10, 10}, {5, 5, 15, 15}) == doctest::Approx(25.0));
  CHECK(overlap_area({0, 0, 10, 10}, {20, 20, 30, 30}) == 0.0);
}

TEST_CASE("polygon predicates") {
  const std::vector<Point> square{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  CHECK(point_in_polygon({5, 5}, square));
  CHECK(point_in_polygon({10, 5}, square));
  CHECK_FALSE(point_in_polygon({11, 5}, square));

  CHECK(segments_intersect({0, 0}, {10, 10}, {0, 10}, {10, 0}));
  CHECK(segments_intersect({0, 0}, {10, 0}, {5, 0}, {15, 0}));
  CHECK_FALSE(segments_intersect({0, 0}, {10, 0}, {0, 1}, {10, 1}));

  const std::vector<Point> inner{{4, 4}, {6, 4}, {6, 6}, {4, 6}};
  const std::vector<Point> crossing{{8, 8}, {20, 8}, {20, 20}, {8, 20}};
  const std::vector<Point> far{{30, 30}, {40, 30}, {40, 40}};
  CHECK(polygons_intersect(square, inner));
  CHECK(polygons_intersect(inner, square));
  CHECK(polygons_intersect(square, crossing));
  CHECK_FALSE(polygons_intersect(square, far));
}
