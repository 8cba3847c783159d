#pragma once

#include <string>
#include <vector>

#include "hcd/channels.hpp"

namespace hcd {

struct Kernel {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  double sum() const;
};

struct Filter {
  std::string name;
  Kernel kernel;
  int cell_rows = 1;  // cell span of the pattern
  int cell_cols = 1;
  // Empty means the filter applies to every channel.
  std::vector<std::string> applicable_channels;

  bool applies_to(const std::string& channel) const;
};

struct FilterBank {
  std::string name;
  std::vector<Filter> filters;
  int cell_pixel_size = 1;

  // Filters applicable to `channel`, in bank order.
  std::vector<const Filter*> filters_for(const std::string& channel) const;
  void validate() const;
};

// Eleven 2×2-cell checkerboard-like patterns, each cell replicated to
// cell_pixel_size × cell_pixel_size pixels. Applies to all channels.
FilterBank build_cb11(int cell_pixel_size = 4);

// Constant filter plus two orthogonal step functions, each at 4, 8 and 16
// cells per side: 9 filters per HOG+LUV channel. Steps are axis-aligned for
// M, L, U, V and rotated to the bin's central angle for O0..O5.
FilterBank build_rotated_filters(int cell_pixel_size = 1);

// "cb11" or "rf9"; throws ConfigError otherwise. "hogluv" is the identity and
// has no bank (see compute_channels).
FilterBank bank_by_name(const std::string& name);

// Zero-padded "same"-size cross-correlation of every applicable (channel,
// filter) pair. Output channels are named "{channel}:{filter}", channel-major.
// The kernel anchor is ((rows-1)/2, (cols-1)/2).
ChannelStack apply_bank(const ChannelStack& stack, const FilterBank& bank);

// HOG+LUV followed by the named bank ("hogluv" returns the HOG+LUV stack).
ChannelStack compute_channels(const Image& img, const std::string& bank_name,
                              const ChannelConfig& cfg = {});

// Number of output channels the named bank yields on a 10-channel HOG+LUV stack.
std::size_t bank_output_channels(const std::string& bank_name);

}  // namespace hcd
