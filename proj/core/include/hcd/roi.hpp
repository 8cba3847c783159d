#pragma once

#include <span>
#include <string>
#include <vector>

#include "hcd/channels.hpp"
#include "hcd/geometry.hpp"

namespace hcd {

struct FeatureLayout {
  std::string source;
  std::size_t channels = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  std::size_t size() const { return channels * out_h * out_w; }
  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

struct FeatureVector {
  std::vector<float> values;
  std::vector<FeatureLayout> layout;

  std::size_t size() const { return values.size(); }
  // Throws DataError when the layout disagrees with the value count or a value is non-finite.
  void validate() const;
  // Values belonging to layout entry `part`.
  std::span<const float> part(std::size_t part) const;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Integer pixel window [y0,y1)×[x0,x1) of a box inside a stack.
struct PixelWindow {
  int x0, y0, x1, y1;
};

// Maps an image-coordinate box into stack pixels: divide by the downsample
// factor, round edges to the nearest integer, clip to the plane. A window that
// rounds to zero extent is widened to one pixel. Throws DataError when the box
// lies entirely outside the image.
PixelWindow map_box_to_stack(const ChannelStack& stack, const BoundingBox& box);

// RoI max-pooling onto an out_h × out_w grid. Bin (i,j) covers rows
// [floor(i·h/H), ceil((i+1)·h/H)) and the analogous columns of the window, so
// bins are never empty; when the window is smaller than the grid, neighbouring
// bins share pixels and repeat values. Output is channel-major.
FeatureVector roi_pool(const ChannelStack& stack, const BoundingBox& box, int out_h, int out_w);

// Concatenation in order; throws DataError on an empty list.
FeatureVector concat_features(std::span<const FeatureVector> parts);

// Divides each layout part by its L2 norm (parts with zero norm are left as-is).
void l2_normalize_parts(FeatureVector& fv);

std::string stack_source_name(const ChannelStack& stack);

}  // namespace hcd
