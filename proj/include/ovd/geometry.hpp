#pragma once

#include <random>

namespace ovd {

// Axis-aligned box, corner-encoded in continuous world coordinates.
// Zero-area boxes are legal everywhere and never match anything (IoU 0).
struct Box {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const;
};

// Scored box. Score semantics depend on the producer (objectness or
// class-query confidence); always in [0, 1].
struct Proposal {
  Box box;
  double score = 0.0;
};

// Intersection over union; 0 when the union has zero area.
double iou(const Box& a, const Box& b);

// Perturbs each corner by uniform noise proportional to strength times the
// box side lengths, clips to bounds and restores corner ordering. Strength 0
// returns the box unchanged (the rng still advances by four draws).
Box jitter(const Box& box, double strength, std::mt19937_64& rng,
           const Box& bounds);

}  // namespace ovd
