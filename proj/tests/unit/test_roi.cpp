#include <doctest.h>

#include <random>

#include "hcd/error.hpp"
#include "hcd/roi.hpp"
#include "oracles.hpp"

using namespace hcd;

namespace {

ChannelStack random_stack(std::mt19937_64& rng, int w, int h, int channels, int factor = 1) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  ChannelStack s(w, h, Provenance::Cnn, "conv", factor);
  for (int c = 0; c < channels; ++c)
    for (auto& v : s.add_channel("c" + std::to_string(c))) v = u(rng);
  return s;
}

BoundingBox random_box(std::mt19937_64& rng, double img_w, double img_h) {
  std::uniform_real_distribution<double> ux(-0.2 * img_w, img_w), uy(-0.2 * img_h, img_h);
  std::uniform_real_distribution<double> ext(0.3, 1.0);
  for (;;) {
    BoundingBox b{ux(rng), uy(rng), ext(rng) * img_w, ext(rng) * img_h};
    if (b.right() > 0.5 && b.bottom() > 0.5 && b.x < img_w - 0.5 && b.y < img_h - 0.5) return b;
  }
}

}  // namespace

TEST_CASE("roi_pool: output length and constant planes") {
  ChannelStack s(40, 30, Provenance::HogLuv);
  for (int c = 0; c < 10; ++c)
    for (auto& v : s.add_channel("c" + std::to_string(c))) v = 0.25;
  const auto fv = roi_pool(s, {3, 4, 20, 17}, 20, 20);
  CHECK(fv.size() == 4000);
  CHECK(fv.layout.size() == 1);
  CHECK(fv.layout[0].channels == 10);
  for (float v : fv.values) CHECK(v == 0.25f);
}

TEST_CASE("roi_pool: 1x1 output is the window maximum") {
  std::mt19937_64 rng(1);
  const auto s = random_stack(rng, 17, 13, 3);
  const BoundingBox box{2, 3, 9, 6};
  const auto fv = roi_pool(s, box, 1, 1);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = -1e9;
    for (int y = 3; y < 9; ++y)
      for (int x = 2; x < 11; ++x) m = std::max(m, s.at(c, y, x));
    CHECK(fv.values[c] == static_cast<float>(m));
  }
}

TEST_CASE("roi_pool: full 9x9 plane into 3x3 equals block maxima") {
  std::mt19937_64 rng(2);
  const auto s = random_stack(rng, 9, 9, 1);
  const auto fv = roi_pool(s, {0, 0, 9, 9}, 3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double m = -1e9;
      for (int y = 3 * i; y < 3 * i + 3; ++y)
        for (int x = 3 * j; x < 3 * j + 3; ++x) m = std::max(m, s.at(0, y, x));
      CHECK(fv.values[i * 3 + j] == static_cast<float>(m));
    }
}

TEST_CASE("roi_pool: matches the nested-loop oracle on random stacks") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> dim(1, 32), out(1, 9), fac(1, 4);
    const int f = fac(rng);
    const auto s = random_stack(rng, dim(rng), dim(rng), 2, f);
    const auto box = random_box(rng, s.width() * f, s.height() * f);
    const int oh = out(rng), ow = out(rng);
    const auto fv = roi_pool(s, box, oh, ow);
    for (std::size_t c = 0; c < 2; ++c) {
      const auto ref = oracle::roi_pool(oracle::plane_of(s, c), f, box, oh, ow);
      for (std::size_t k = 0; k < ref.size(); ++k)
        REQUIRE(fv.values[c * oh * ow + k] == static_cast<float>(ref[k]));
    }
  }
}

TEST_CASE("roi_pool: sub-pixel RoIs still produce a full-length vector") {
  std::mt19937_64 rng(4);
  const auto s = random_stack(rng, 8, 8, 2, 4);
  const auto fv = roi_pool(s, {5.0, 6.0, 1.0, 1.0}, 7, 7);
  CHECK(fv.size() == 2 * 49);
  for (std::size_t c = 0; c < 2; ++c)
    for (int k = 0; k < 49; ++k) CHECK(fv.values[c * 49 + k] == fv.values[c * 49]);
}

TEST_CASE("roi_pool: properties") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_stack(rng, 24, 24, 1);
    const BoundingBox box{4, 5, 10, 9};
    const auto fine = roi_pool(s, box, 4, 3);
    const auto global = roi_pool(s, box, 1, 1);
    for (float v : fine.values) CHECK(v <= global.values[0]);

    // Translation by whole pixels.
    ChannelStack shifted(24, 24, Provenance::Cnn, "conv");
    auto p = shifted.add_channel("c0");
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) p[y * 24 + x] = s.at(0, (y + 24 - 2) % 24, (x + 24 - 3) % 24);
    const auto moved = roi_pool(shifted, {box.x + 3, box.y + 2, box.w, box.h}, 4, 3);
    CHECK(moved.values == fine.values);

    // Monotonicity.
    ChannelStack bumped = s;
    std::uniform_int_distribution<int> pix(0, 24 * 24 - 1);
    bumped.plane(0)[pix(rng)] += 0.5;
    const auto up = roi_pool(bumped, box, 4, 3);
    for (std::size_t k = 0; k < up.size(); ++k) CHECK(up.values[k] >= fine.values[k]);
  }
}

TEST_CASE("roi_pool: errors") {
  ChannelStack s(10, 10, Provenance::HogLuv);
  s.add_channel("M");
  CHECK_THROWS_AS(roi_pool(s, {20, 20, 5, 5}, 2, 2), DataError);
  CHECK_THROWS_AS(roi_pool(s, {-8, 0, 5, 5}, 2, 2), DataError);
  CHECK_THROWS_AS(roi_pool(s, {1, 1, 0, 5}, 2, 2), DataError);
  CHECK_THROWS_AS(roi_pool(s, {1, 1, 5, 5}, 0, 2), ConfigError);
}

TEST_CASE("concat_features: lengths, layout and slicing") {
  std::mt19937_64 rng(6);
  ChannelStack rf(30, 30, Provenance::Filtered, "rf9");
  for (int c = 0; c < 90; ++c) rf.add_channel("f" + std::to_string(c));
  ChannelStack cnn(8, 8, Provenance::Cnn, "conv3", 4);
  for (int c = 0; c < 256; ++c) cnn.add_channel("k" + std::to_string(c));
  const BoundingBox box{2, 2, 20, 24};
  const FeatureVector parts[] = {roi_pool(rf, box, 20, 20), roi_pool(cnn, box, 7, 7)};
  const auto fused = concat_features(parts);
  CHECK(fused.size() == 48544);
  CHECK(fused.layout.size() == 2);
  CHECK(fused.layout[1].source == "cnn:conv3");
  fused.validate();
  CHECK(std::vector<float>(fused.part(0).begin(), fused.part(0).end()) == parts[0].values);
  CHECK(std::vector<float>(fused.part(1).begin(), fused.part(1).end()) == parts[1].values);

  const auto single = concat_features(std::span(parts, 1));
  CHECK(single == parts[0]);
  CHECK_THROWS_AS(concat_features({}), DataError);
}

TEST_CASE("l2_normalize_parts normalizes each part independently") {
  FeatureVector fv;
  fv.values = {3, 4, 0, 0, 2};
  fv.layout = {{"a", 1, 1, 2}, {"b", 1, 1, 2}, {"c", 1, 1, 1}};
  l2_normalize_parts(fv);
  CHECK(fv.values[0] == doctest::Approx(0.6));
  CHECK(fv.values[1] == doctest::Approx(0.8));
  CHECK(fv.values[2] == 0.0f);
  CHECK(fv.values[4] == doctest::Approx(1.0));
}
