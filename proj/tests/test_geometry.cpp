#include <doctest.h>

#include "ovd/geometry.hpp"
#include "ovd/rng.hpp"

using namespace ovd;

TEST_SUITE("geometry") {

TEST_CASE("iou fixtures") {
  CHECK(iou(Box{0, 0, 2, 2}, Box{0, 0, 2, 2}) == doctest::Approx(1.0));
  CHECK(iou(Box{0, 0, 1, 1}, Box{2, 2, 3, 3}) == doctest::Approx(0.0));
  // areas 4 and 4, intersection 2: 2 / (4 + 4 - 2)
  CHECK(iou(Box{0, 0, 2, 2}, Box{1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("iou of zero-area boxes is 0") {
  const Box point{1, 1, 1, 1};
  CHECK(iou(point, point) == 0.0);
  CHECK(iou(point, Box{0, 0, 2, 2}) == 0.0);
}

TEST_CASE("iou symmetry and range over random boxes") {
  std::mt19937_64 g = rng::engine(42);
  for (int i = 0; i < 500; ++i) {
    auto rand_box = [&] {
      const double x1 = rng::uniform(g, 0, 90);
      const double y1 = rng::uniform(g, 0, 90);
      return Box{x1, y1, x1 + rng::uniform(g, 0, 10),
                 y1 + rng::uniform(g, 0, 10)};
    };
    const Box a = rand_box(), b = rand_box();
    const double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    if (a.area() > 0) CHECK(iou(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("jitter with strength 0 is the identity") {
  std::mt19937_64 g = rng::engine(7);
  const Box b{10, 20, 30, 50};
  const Box bounds{0, 0, 100, 100};
  const Box out = jitter(b, 0.0, g, bounds);
  CHECK(out.x1 == b.x1);
  CHECK(out.y1 == b.y1);
  CHECK(out.x2 == b.x2);
  CHECK(out.y2 == b.y2);
}

TEST_CASE("jitter output is valid and inside bounds") {
  std::mt19937_64 g = rng::engine(11);
  const Box bounds{0, 0, 50, 40};
  for (int i = 0; i < 500; ++i) {
    const Box b{rng::uniform(g, 0, 40), rng::uniform(g, 0, 30),
                rng::uniform(g, 40, 50), rng::uniform(g, 30, 40)};
    const Box out = jitter(b, rng::uniform(g, 0, 2.0), g, bounds);
    CHECK(out.valid());
    CHECK(out.x1 >= bounds.x1);
    CHECK(out.y1 >= bounds.y1);
    CHECK(out.x2 <= bounds.x2);
    CHECK(out.y2 <= bounds.y2);
  }
}

TEST_CASE("jitter replays deterministically under a fixed seed") {
  const Box b{5, 5, 25, 35};
  const Box bounds{0, 0, 100, 100};
  std::mt19937_64 g1 = rng::engine(123);
  std::mt19937_64 g2 = rng::engine(123);
  for (int i = 0; i < 20; ++i) {
    const Box o1 = jitter(b, 0.5, g1, bounds);
    const Box o2 = jitter(b, 0.5, g2, bounds);
    CHECK(o1.x1 == o2.x1);
    CHECK(o1.y1 == o2.y1);
    CHECK(o1.x2 == o2.x2);
    CHECK(o1.y2 == o2.y2);
  }
}

}  // TEST_SUITE
