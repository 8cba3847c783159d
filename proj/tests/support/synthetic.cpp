#include "synthetic.hpp"

#include <cmath>
#include <random>

namespace synthetic {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

hcd::SampleSet noisy_blobs(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  hcd::SampleSet s(dim);
  std::vector<float> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = (i % 3 == 0) ? 1 : -1;
    for (std::size_t d = 0; d < dim; ++d) x[d] = static_cast<float>(g(rng) + (d % 2 == 0 ? 0.6 * y : 0.0));
    s.add(x, y, sigmoid(1.2 * y + 1.5 * g(rng)));
  }
  return s;
}

hcd::SampleSet separable_2d(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  hcd::SampleSet s(2);
  while (s.size() < n) {
    const double a = u(rng), b = u(rng);
    const double side = 0.8 * a - 0.6 * b + 0.1;
    if (std::fabs(side) < 0.05) continue;
    const float x[2] = {static_cast<float>(a), static_cast<float>(b)};
    s.add(x, side > 0 ? 1 : -1, 0.5);
  }
  return s;
}

BlobSource::BlobSource(std::size_t images, std::size_t per_image, std::size_t dim,
                       std::uint64_t seed, bool positives, double hard_fraction)
    : dim_(dim) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  cands_.resize(images);
  x_.resize(images);
  hard_.resize(images);
  for (std::size_t im = 0; im < images; ++im) {
    for (std::size_t k = 0; k < per_image; ++k) {
      const double r = u(rng);
      const bool pos = positives && r < 0.15;
      const bool hard = !pos && r > 1.0 - hard_fraction;
      std::vector<float> x(dim);
      const double mu = (pos || hard) ? 1.0 : -1.0;
      for (std::size_t d = 0; d + 1 < dim; ++d) x[d] = static_cast<float>(mu + g(rng));
      x[dim - 1] = static_cast<float>((hard ? 2.5 : 0.0) + 0.3 * g(rng));
      const double s = sigmoid((pos || hard ? 1.5 : -1.5) + g(rng));
      hcd::Proposal p{{10.0 * k, 0.0, 10.0, 20.0}, s, "im" + std::to_string(im)};
      cands_[im].push_back({p, pos ? 1 : -1});
      x_[im].push_back(std::move(x));
      hard_[im].push_back(hard);
    }
  }
}

std::vector<hcd::FeatureVector> BlobSource::features(std::size_t image,
                                                     std::span<const std::size_t> which) {
  std::vector<hcd::FeatureVector> out;
  out.reserve(which.size());
  for (std::size_t idx : which) {
    hcd::FeatureVector fv;
    fv.values = x_[image][idx];
    fv.layout = {{"synthetic", dim_, 1, 1}};
    out.push_back(std::move(fv));
  }
  return out;
}

}  // namespace synthetic
