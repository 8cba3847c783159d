#include "hcd/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace hcd {

bool BoundingBox::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) && w > 0.0 &&
         h > 0.0;
}

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double ioa(const BoundingBox& det, const BoundingBox& region) {
  const double a = det.area();
  return a > 0.0 ? intersection_area(det, region) / a : 0.0;
}

BoundingBox scale_box(const BoundingBox& b, double s) {
  return {b.x * s, b.y * s, b.w * s, b.h * s};
}

}  // namespace hcd
