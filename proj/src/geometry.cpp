#include "ovd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace ovd {

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
         std::isfinite(y2) && x1 <= x2 && y1 <= y2;
}

double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Box jitter(const Box& box, double strength, std::mt19937_64& rng,
           const Box& bounds) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double sx = strength * box.width();
  const double sy = strength * box.height();
  Box out = box;
  out.x1 += u(rng) * sx;
  out.y1 += u(rng) * sy;
  out.x2 += u(rng) * sx;
  out.y2 += u(rng) * sy;
  out.x1 = std::clamp(out.x1, bounds.x1, bounds.x2);
  out.x2 = std::clamp(out.x2, bounds.x1, bounds.x2);
  out.y1 = std::clamp(out.y1, bounds.y1, bounds.y2);
  out.y2 = std::clamp(out.y2, bounds.y1, bounds.y2);
  if (out.x1 > out.x2) std::swap(out.x1, out.x2);
  if (out.y1 > out.y2) std::swap(out.y1, out.y2);
  return out;
}

}  // namespace ovd
