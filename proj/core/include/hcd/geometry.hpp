#pragma once

#include <string>

namespace hcd {

// Axis-aligned rectangle, top-left corner plus extent, continuous pixel coordinates.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  bool valid() const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Proposal {
  BoundingBox box;
  double score = 0.0;
  std::string image_id;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

double intersection_area(const BoundingBox& a, const BoundingBox& b);

// area(a ∩ b) / area(a ∪ b) on continuous rectangles; 0 when the union is empty.
double iou(const BoundingBox& a, const BoundingBox& b);

// Intersection over the area of `det`; used for ignore-region matching.
double ioa(const BoundingBox& det, const BoundingBox& region);

BoundingBox scale_box(const BoundingBox& b, double s);

}  // namespace hcd
