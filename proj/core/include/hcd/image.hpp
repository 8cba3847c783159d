#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace hcd {

// Planar RGB image with values in [0,1].
class Image {
 public:
  Image() = default;
  Image(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(width_) * height_; }

  // c in {0,1,2} for R,G,B.
  std::span<double> plane(int c);
  std::span<const double> plane(int c) const;

  double& at(int c, int y, int x) { return data_[c * plane_size() + y * width_ + x]; }
  double at(int c, int y, int x) const { return data_[c * plane_size() + y * width_ + x]; }

  void fill(double r, double g, double b);

  // Throws DataError unless dims ≥ 1 and every value is finite and in [0,1].
  void validate() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

// Decodes 8-bit PNG (gray, gray+alpha, RGB, RGBA) or binary/ASCII PPM (P6/P3).
Image load_image(const std::filesystem::path& path);

void save_png(const Image& img, const std::filesystem::path& path);
void save_ppm(const Image& img, const std::filesystem::path& path);

// Bilinear resampling with pixel-center alignment; identity when dims are unchanged.
Image resize_bilinear(const Image& img, int new_width, int new_height);

}  // namespace hcd
