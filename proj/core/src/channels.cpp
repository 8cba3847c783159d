#include "hcd/channels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "hcd/error.hpp"

namespace hcd {

ChannelStack::ChannelStack(int width, int height, Provenance provenance, std::string source,
                           int downsample_factor)
    : width_(width), height_(height), provenance_(provenance), source_(std::move(source)) {
  if (width < 1 || height < 1) throw DataError("channel stack dimensions must be positive");
  set_downsample_factor(downsample_factor);
}

void ChannelStack::set_downsample_factor(int f) {
  if (f < 1) throw DataError("downsample_factor must be >= 1");
  downsample_factor_ = f;
}

int ChannelStack::index_of(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

std::span<double> ChannelStack::add_channel(std::string name) {
  if (index_of(name) >= 0) throw DataError("duplicate channel name '" + name + "'");
  names_.push_back(std::move(name));
  data_.resize(data_.size() + plane_size(), 0.0);
  return plane(names_.size() - 1);
}

void ChannelStack::validate() const {
  if (width_ < 1 || height_ < 1) throw DataError("channel stack has empty dimensions");
  if (downsample_factor_ < 1) throw DataError("downsample_factor must be >= 1");
  if (data_.size() != names_.size() * plane_size()) throw DataError("channel payload size mismatch");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_)
    if (!seen.insert(n).second) throw DataError("duplicate channel name '" + n + "'");
  for (double v : data_)
    if (!std::isfinite(v)) throw DataError("channel stack contains a non-finite value");
}

void ChannelConfig::validate() const {
  if (!(norm_epsilon > 0.0)) throw ConfigError("norm_epsilon must be > 0");
  if (num_orientations != 6) throw ConfigError("num_orientations is fixed at 6");
  if (shrink < 1) throw ConfigError("shrink must be >= 1");
  if (smooth_radius < 0) throw ConfigError("smooth_radius must be >= 0");
}

namespace {

double srgb_to_linear(double c) {
  return c > 0.04045 ? std::pow((c + 0.055) / 1.055, 2.4) : c / 12.92;
}

// sRGB primaries under D65.
constexpr double kRgbToXyz[3][3] = {{0.412453, 0.357580, 0.180423},
                                    {0.212671, 0.715160, 0.072169},
                                    {0.019334, 0.119193, 0.950227}};
constexpr double kWhite[3] = {0.95047, 1.0, 1.08883};

// Per-pixel max-channel gradient: raw magnitude and unsigned angle in [0,π).
struct Gradient {
  std::vector<double> mag;
  std::vector<double> angle;
};

Gradient max_channel_gradient(const Image& img) {
  const int w = img.width(), h = img.height();
  Gradient g;
  g.mag.assign(img.plane_size(), 0.0);
  g.angle.assign(img.plane_size(), 0.0);
  std::vector<double> best_sq(img.plane_size(), -1.0);

  for (int c = 0; c < 3; ++c) {
    const auto p = img.plane(c);
    for (int y = 0; y < h; ++y) {
      const double* row = p.data() + static_cast<std::size_t>(y) * w;
      const double* up = p.data() + static_cast<std::size_t>(std::max(y - 1, 0)) * w;
      const double* dn = p.data() + static_cast<std::size_t>(std::min(y + 1, h - 1)) * w;
      for (int x = 0; x < w; ++x) {
        const double gx = 0.5 * (row[std::min(x + 1, w - 1)] - row[std::max(x - 1, 0)]);
        const double gy = 0.5 * (dn[x] - up[x]);
        const double sq = gx * gx + gy * gy;
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (sq > best_sq[i]) {
          best_sq[i] = sq;
          g.mag[i] = std::sqrt(sq);
          double a = std::atan2(gy, gx);
          if (a < 0.0) a += std::numbers::pi;
          if (a >= std::numbers::pi) a -= std::numbers::pi;
          g.angle[i] = a;
        }
      }
    }
  }
  return g;
}

// Box mean with replicate borders, separable.
std::vector<double> box_smooth(const std::vector<double>& src, int w, int h, int r) {
  if (r == 0) return src;
  std::vector<double> tmp(src.size()), out(src.size());
  const double norm = 1.0 / (2 * r + 1);
  for (int y = 0; y < h; ++y) {
    const double* row = src.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += row[std::clamp(x + k, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = s * norm;
    }
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k)
        s += tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = s * norm;
    }
  return out;
}

std::vector<double> normalized_magnitude(const Gradient& g, int w, int h,
                                         const ChannelConfig& cfg) {
  const auto smooth = box_smooth(g.mag, w, h, cfg.smooth_radius);
  std::vector<double> m(g.mag.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = g.mag[i] / (smooth[i] + cfg.norm_epsilon);
  return m;
}

void fill_orientations(ChannelStack& out, const Gradient& g, const std::vector<double>& m,
                       const ChannelConfig& cfg) {
  const int n = cfg.num_orientations;
  const std::size_t first = out.num_channels();
  for (int b = 0; b < n; ++b) out.add_channel("O" + std::to_string(b));
  // Spans are taken after all insertions; add_channel may reallocate.
  std::vector<std::span<double>> planes;
  for (int b = 0; b < n; ++b) planes.push_back(out.plane(first + b));
  const double scale = n / std::numbers::pi;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double o = g.angle[i] * scale;
    if (cfg.binning == Binning::Hard) {
      const int b = static_cast<int>(std::floor(o + 0.5)) % n;
      planes[b][i] = m[i];
    } else {
      const int b0 = static_cast<int>(std::floor(o));
      const double t = o - b0;
      planes[b0 % n][i] += (1.0 - t) * m[i];
      planes[(b0 + 1) % n][i] += t * m[i];
    }
  }
}

void check_input(const Image& img, const ChannelConfig& cfg) {
  img.validate();
  cfg.validate();
}

}  // namespace

ChannelStack rgb_to_luv(const Image& img) {
  img.validate();
  ChannelStack out(img.width(), img.height(), Provenance::HogLuv);
  for (const char* name : {"L", "U", "V"}) out.add_channel(name);
  auto L = out.plane(0), U = out.plane(1), V = out.plane(2);

  const double wden = kWhite[0] + 15.0 * kWhite[1] + 3.0 * kWhite[2];
  const double un = 4.0 * kWhite[0] / wden;
  const double vn = 9.0 * kWhite[1] / wden;

  const auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  for (std::size_t i = 0; i < img.plane_size(); ++i) {
    const double rl = srgb_to_linear(r[i]), gl = srgb_to_linear(g[i]), bl = srgb_to_linear(b[i]);
    double xyz[3];
    for (int k = 0; k < 3; ++k)
      xyz[k] = kRgbToXyz[k][0] * rl + kRgbToXyz[k][1] * gl + kRgbToXyz[k][2] * bl;
    const double yr = xyz[1] / kWhite[1];
    const double lstar = yr > 0.008856 ? 116.0 * std::cbrt(yr) - 16.0 : 903.3 * yr;
    const double den = xyz[0] + 15.0 * xyz[1] + 3.0 * xyz[2];
    // Black takes the white-point chromaticity, so u* = v* = 0.
    const double up = den > 0.0 ? 4.0 * xyz[0] / den : un;
    const double vp = den > 0.0 ? 9.0 * xyz[1] / den : vn;
    const double ustar = 13.0 * lstar * (up - un);
    const double vstar = 13.0 * lstar * (vp - vn);
    L[i] = lstar / 100.0;
    U[i] = (ustar + 100.0) / 280.0;
    V[i] = (vstar + 140.0) / 250.0;
  }
  return out;
}

ChannelStack gradient_magnitude(const Image& img, const ChannelConfig& cfg) {
  check_input(img, cfg);
  const auto g = max_channel_gradient(img);
  const auto m = normalized_magnitude(g, img.width(), img.height(), cfg);
  ChannelStack out(img.width(), img.height(), Provenance::HogLuv);
  std::ranges::copy(m, out.add_channel("M").begin());
  return out;
}

ChannelStack orientation_channels(const Image& img, const ChannelConfig& cfg) {
  check_input(img, cfg);
  const auto g = max_channel_gradient(img);
  const auto m = normalized_magnitude(g, img.width(), img.height(), cfg);
  ChannelStack out(img.width(), img.height(), Provenance::HogLuv);
  fill_orientations(out, g, m, cfg);
  return out;
}

ChannelStack compute_hogluv(const Image& img, const ChannelConfig& cfg) {
  check_input(img, cfg);
  const auto g = max_channel_gradient(img);
  const auto m = normalized_magnitude(g, img.width(), img.height(), cfg);
  ChannelStack out(img.width(), img.height(), Provenance::HogLuv);
  std::ranges::copy(m, out.add_channel("M").begin());
  fill_orientations(out, g, m, cfg);
  const auto luv = rgb_to_luv(img);
  for (std::size_t c = 0; c < luv.num_channels(); ++c)
    std::ranges::copy(luv.plane(c), out.add_channel(luv.name(c)).begin());
  return cfg.shrink > 1 ? shrink_stack(out, cfg.shrink) : out;
}

ChannelStack shrink_stack(const ChannelStack& stack, int factor) {
  if (factor < 1) throw ConfigError("shrink factor must be >= 1");
  if (factor == 1) return stack;
  const int w = stack.width() / factor, h = stack.height() / factor;
  if (w < 1 || h < 1) throw DataError("image smaller than shrink factor");
  ChannelStack out(w, h, stack.provenance(), stack.source(), stack.downsample_factor() * factor);
  const double inv_area = 1.0 / (factor * factor);
  for (std::size_t c = 0; c < stack.num_channels(); ++c) {
    auto dst = out.add_channel(stack.name(c));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) s += stack.at(c, y * factor + dy, x * factor + dx);
        dst[static_cast<std::size_t>(y) * w + x] = s * inv_area;
      }
  }
  return out;
}

}  // namespace hcd
