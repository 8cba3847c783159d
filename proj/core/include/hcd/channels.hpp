#pragma once

#include <span>
#include <string>
#include <vector>

#include "hcd/image.hpp"

namespace hcd {

enum class Provenance { HogLuv, Filtered, Cnn };

// Same-shape scalar planes derived from one image, stored channel-major.
class ChannelStack {
 public:
  ChannelStack() = default;
  ChannelStack(int width, int height, Provenance provenance, std::string source = {},
               int downsample_factor = 1);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }
  std::size_t num_channels() const { return names_.size(); }

  Provenance provenance() const { return provenance_; }
  // Bank name for Filtered stacks, layer name for Cnn stacks.
  const std::string& source() const { return source_; }
  int downsample_factor() const { return downsample_factor_; }
  void set_downsample_factor(int f);

  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t c) const { return names_[c]; }
  // Returns -1 when absent.
  int index_of(const std::string& name) const;

  // Appends a zero plane; throws DataError on a duplicate name. The returned span
  // (and any earlier plane span) is invalidated by the next add_channel.
  std::span<double> add_channel(std::string name);

  std::span<double> plane(std::size_t c) {
    return {data_.data() + c * plane_size(), plane_size()};
  }
  std::span<const double> plane(std::size_t c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }
  double at(std::size_t c, int y, int x) const {
    return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x];
  }

  const std::vector<double>& data() const { return data_; }

  // Throws DataError on non-finite values, duplicate names, or bad dims.
  void validate() const;

  friend bool operator==(const ChannelStack&, const ChannelStack&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  Provenance provenance_ = Provenance::HogLuv;
  std::string source_;
  int downsample_factor_ = 1;
  std::vector<std::string> names_;
  std::vector<double> data_;
};

enum class Binning { Hard, SoftLinear };

struct ChannelConfig {
  int smooth_radius = 5;
  double norm_epsilon = 0.005;
  int num_orientations = 6;
  Binning binning = Binning::Hard;
  int shrink = 1;

  void validate() const;
};

// CIE-LUV (D65) of the sRGB input, each plane affinely mapped into [0,1]:
//   L = L*/100, U = (u* + 100)/280, V = (v* + 140)/250.
ChannelStack rgb_to_luv(const Image& img);

// Normalized gradient magnitude M / (box_smooth(M) + eps), single channel "M".
ChannelStack gradient_magnitude(const Image& img, const ChannelConfig& cfg = {});

// Six unsigned orientation planes O0..O5; bin b is centred on angle b·π/6.
ChannelStack orientation_channels(const Image& img, const ChannelConfig& cfg = {});

// [M, O0..O5, L, U, V], optionally block-averaged by cfg.shrink.
ChannelStack compute_hogluv(const Image& img, const ChannelConfig& cfg = {});

// Block-mean downsampling by an integer factor; trailing partial blocks are dropped.
ChannelStack shrink_stack(const ChannelStack& stack, int factor);

inline constexpr int kHogLuvChannels = 10;

}  // namespace hcd
