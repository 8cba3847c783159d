#include "hcd/roi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hcd/error.hpp"

namespace hcd {

void FeatureVector::validate() const {
  std::size_t expected = 0;
  for (const auto& l : layout) expected += l.size();
  if (expected != values.size())
    throw DataError("feature vector has " + std::to_string(values.size()) +
                    " values but its layout describes " + std::to_string(expected));
  for (float v : values)
    if (!std::isfinite(v)) throw DataError("feature vector contains a non-finite value");
}

std::span<const float> FeatureVector::part(std::size_t p) const {
  std::size_t offset = 0;
  for (std::size_t i = 0; i < p; ++i) offset += layout[i].size();
  return {values.data() + offset, layout.at(p).size()};
}

std::string stack_source_name(const ChannelStack& stack) {
  switch (stack.provenance()) {
    case Provenance::HogLuv:
      return "hogluv";
    case Provenance::Filtered:
      return stack.source();
    case Provenance::Cnn:
      return "cnn:" + stack.source();
  }
  return {};
}

PixelWindow map_box_to_stack(const ChannelStack& stack, const BoundingBox& box) {
  if (!box.valid()) throw DataError("RoI box must have finite coordinates and positive extent");
  const double f = stack.downsample_factor();
  const double fx0 = box.x / f, fy0 = box.y / f;
  const double fx1 = box.right() / f, fy1 = box.bottom() / f;
  if (fx1 <= 0.0 || fy1 <= 0.0 || fx0 >= stack.width() || fy0 >= stack.height())
    throw DataError("degenerate RoI: box lies entirely outside the image");

  auto edge = [](double v, int lim) {
    return static_cast<int>(std::clamp(std::round(v), 0.0, static_cast<double>(lim)));
  };
  PixelWindow win{edge(fx0, stack.width()), edge(fy0, stack.height()), edge(fx1, stack.width()),
                  edge(fy1, stack.height())};
  if (win.x1 <= win.x0) {
    win.x0 = std::min(win.x0, stack.width() - 1);
    win.x1 = win.x0 + 1;
  }
  if (win.y1 <= win.y0) {
    win.y0 = std::min(win.y0, stack.height() - 1);
    win.y1 = win.y0 + 1;
  }
  return win;
}

FeatureVector roi_pool(const ChannelStack& stack, const BoundingBox& box, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ConfigError("RoI output resolution must be >= 1");
  const auto win = map_box_to_stack(stack, box);
  const int h = win.y1 - win.y0, w = win.x1 - win.x0;

  std::vector<int> ys(out_h), ye(out_h), xs(out_w), xe(out_w);
  for (int i = 0; i < out_h; ++i) {
    ys[i] = win.y0 + (i * h) / out_h;
    ye[i] = win.y0 + ((i + 1) * h + out_h - 1) / out_h;
  }
  for (int j = 0; j < out_w; ++j) {
    xs[j] = win.x0 + (j * w) / out_w;
    xe[j] = win.x0 + ((j + 1) * w + out_w - 1) / out_w;
  }

  FeatureVector fv;
  const std::size_t cells = static_cast<std::size_t>(out_h) * out_w;
  fv.values.resize(stack.num_channels() * cells);
  fv.layout.push_back({stack_source_name(stack), stack.num_channels(),
                       static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)});

  const int sw = stack.width();
  for (std::size_t c = 0; c < stack.num_channels(); ++c) {
    const auto p = stack.plane(c);
    float* dst = fv.values.data() + c * cells;
    for (int i = 0; i < out_h; ++i)
      for (int j = 0; j < out_w; ++j) {
        double m = -std::numeric_limits<double>::infinity();
        for (int y = ys[i]; y < ye[i]; ++y) {
          const double* row = p.data() + static_cast<std::size_t>(y) * sw;
          for (int x = xs[j]; x < xe[j]; ++x) m = std::max(m, row[x]);
        }
        dst[i * out_w + j] = static_cast<float>(m);
      }
  }
  return fv;
}

FeatureVector concat_features(std::span<const FeatureVector> parts) {
  if (parts.empty()) throw DataError("concat_features needs at least one part");
  FeatureVector out;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.values.size();
  out.values.reserve(total);
  for (const auto& p : parts) {
    p.validate();
    out.values.insert(out.values.end(), p.values.begin(), p.values.end());
    out.layout.insert(out.layout.end(), p.layout.begin(), p.layout.end());
  }
  return out;
}

void l2_normalize_parts(FeatureVector& fv) {
  std::size_t offset = 0;
  for (const auto& l : fv.layout) {
    const auto begin = fv.values.begin() + static_cast<std::ptrdiff_t>(offset);
    const auto end = begin + static_cast<std::ptrdiff_t>(l.size());
    const double norm =
        std::sqrt(std::accumulate(begin, end, 0.0, [](double a, float v) { return a + double(v) * v; }));
    if (norm > 0.0)
      std::transform(begin, end, begin, [norm](float v) { return static_cast<float>(v / norm); });
    offset += l.size();
  }
}

}  // namespace hcd
