#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "hcd/error.hpp"
#include "hcd/filters.hpp"
#include "oracles.hpp"

using namespace hcd;

namespace {

std::vector<std::vector<double>> kernel_rows(const Kernel& k) {
  std::vector<std::vector<double>> out(k.rows, std::vector<double>(k.cols));
  for (int r = 0; r < k.rows; ++r)
    for (int c = 0; c < k.cols; ++c) out[r][c] = k.at(r, c);
  return out;
}

ChannelStack random_hogluv_like(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ChannelStack s(w, h, Provenance::HogLuv);
  for (const char* n : {"M", "O0", "O1", "O2", "O3", "O4", "O5", "L", "U", "V"})
    for (auto& v : s.add_channel(n)) v = u(rng);
  return s;
}

}  // namespace

TEST_CASE("CB11: eleven 2x2 patterns, replicated per cell") {
  const auto b1 = build_cb11(1);
  CHECK(b1.filters.size() == 11);
  std::set<std::string> names;
  for (const auto& f : b1.filters) {
    CHECK(f.kernel.rows == 2);
    CHECK(f.kernel.cols == 2);
    CHECK(f.applicable_channels.empty());
    names.insert(f.name);
  }
  CHECK(names.size() == 11);

  const auto b4 = build_cb11(4);
  for (std::size_t i = 0; i < b4.filters.size(); ++i) {
    const auto& k = b4.filters[i].kernel;
    REQUIRE(k.rows == 8);
    REQUIRE(k.cols == 8);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) CHECK(k.at(r, c) == b1.filters[i].kernel.at(r / 4, c / 4));
  }
  CHECK_THROWS_AS(build_cb11(0), ConfigError);
}

TEST_CASE("CB11: every pattern except the uniform square is zero-sum or a corner") {
  const auto b = build_cb11(3);
  for (const auto& f : b.filters) {
    const double s = f.kernel.sum();
    if (f.name == "uniform")
      CHECK(s == 36.0);
    else if (f.name.rfind("corner", 0) == 0)
      CHECK(s == 18.0);
    else
      CHECK(s == 0.0);
  }
}

TEST_CASE("RF9: nine filters per channel with box and zero-sum steps") {
  const auto b = build_rotated_filters();
  for (const char* ch : {"M", "O0", "O1", "O2", "O3", "O4", "O5", "L", "U", "V"})
    CHECK(b.filters_for(ch).size() == 9);
  std::set<int> sizes;
  for (const auto& f : b.filters) {
    sizes.insert(f.kernel.rows);
    CHECK(f.kernel.rows == f.kernel.cols);
    if (f.name.rfind("box", 0) == 0) {
      for (double v : f.kernel.values) CHECK(v > 0.0);
    } else {
      CHECK(f.kernel.sum() == 0.0);
      for (double v : f.kernel.values) CHECK(std::fabs(v) == 1.0);
    }
  }
  CHECK(sizes == std::set<int>{4, 8, 16});
  CHECK(bank_output_channels("rf9") == 90);
  CHECK(bank_output_channels("cb11") == 110);
  CHECK(bank_output_channels("hogluv") == 10);
  CHECK_THROWS_AS(bank_by_name("cb61"), ConfigError);
}

TEST_CASE("RF9: oriented steps follow each bin's angle") {
  const auto b = build_rotated_filters();
  // O0's stepA varies along x; O3's stepA varies along y (angle 90 degrees).
  const Filter* o0 = nullptr;
  const Filter* o3 = nullptr;
  for (const auto& f : b.filters) {
    if (f.name == "stepA4_r0") o0 = &f;
    if (f.name == "stepA4_r90") o3 = &f;
  }
  REQUIRE(o0);
  REQUIRE(o3);
  CHECK(o0->applies_to("O0"));
  CHECK_FALSE(o0->applies_to("O1"));
  for (int r = 0; r < 4; ++r) {
    CHECK(o0->kernel.at(r, 0) == -1.0);
    CHECK(o0->kernel.at(r, 3) == 1.0);
    CHECK(o3->kernel.at(0, r) == -1.0);
    CHECK(o3->kernel.at(3, r) == 1.0);
  }
}

TEST_CASE("apply_bank: channel counts and naming") {
  std::mt19937_64 rng(1);
  const auto s = random_hogluv_like(rng, 20, 18);
  const auto cb = apply_bank(s, build_cb11());
  CHECK(cb.num_channels() == 110);
  CHECK(cb.name(0) == "M:uniform");
  CHECK(cb.name(11) == "O0:uniform");
  CHECK(cb.provenance() == Provenance::Filtered);
  CHECK(cb.source() == "cb11");
  const auto rf = apply_bank(s, build_rotated_filters());
  CHECK(rf.num_channels() == 90);
  CHECK(rf.width() == 20);
  CHECK(rf.height() == 18);
}

TEST_CASE("apply_bank: matches nested-loop cross-correlation") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<int> dim(16, 28);
    const auto s = random_hogluv_like(rng, dim(rng), dim(rng));
    for (const auto& bank : {build_cb11(1), build_cb11(3), build_rotated_filters()}) {
      const auto out = apply_bank(s, bank);
      std::size_t oc = 0;
      for (std::size_t c = 0; c < s.num_channels(); ++c) {
        const auto src = oracle::plane_of(s, c);
        for (const auto* f : bank.filters_for(s.name(c))) {
          const auto ref = oracle::correlate(src, kernel_rows(f->kernel));
          for (int y = 0; y < s.height(); ++y)
            for (int x = 0; x < s.width(); ++x)
              REQUIRE(std::fabs(out.at(oc, y, x) - ref[y][x]) <= 1e-6);
          ++oc;
        }
      }
      CHECK(oc == out.num_channels());
    }
  }
}

TEST_CASE("apply_bank: constant input") {
  ChannelStack s(24, 24, Provenance::HogLuv);
  for (auto& v : s.add_channel("M")) v = 0.75;
  const auto out = apply_bank(s, build_cb11(4));
  // uniform: c·area in the interior, attenuated at the border
  CHECK(out.at(0, 12, 12) == doctest::Approx(0.75 * 64));
  CHECK(out.at(0, 0, 0) < 0.75 * 64);
  for (std::size_t c = 0; c < out.num_channels(); ++c) {
    const auto& name = out.name(c);
    if (name == "M:uniform" || name.find("corner") != std::string::npos) continue;
    for (int y = 4; y < 20; ++y)
      for (int x = 4; x < 20; ++x) CHECK(std::fabs(out.at(c, y, x)) <= 1e-6);
  }
}

TEST_CASE("apply_bank: linearity") {
  std::mt19937_64 rng(4);
  const auto a = random_hogluv_like(rng, 18, 17);
  const auto b = random_hogluv_like(rng, 18, 17);
  const double alpha = 0.7, beta = -1.3;
  ChannelStack mix(18, 17, Provenance::HogLuv);
  for (std::size_t c = 0; c < a.num_channels(); ++c) {
    auto p = mix.add_channel(a.name(c));
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = alpha * a.plane(c)[i] + beta * b.plane(c)[i];
  }
  const auto bank = build_rotated_filters();
  const auto fa = apply_bank(a, bank), fb = apply_bank(b, bank), fm = apply_bank(mix, bank);
  for (std::size_t i = 0; i < fm.data().size(); ++i)
    CHECK(std::fabs(fm.data()[i] - (alpha * fa.data()[i] + beta * fb.data()[i])) <= 1e-5);
}

TEST_CASE("apply_bank: errors") {
  ChannelStack small(6, 6, Provenance::HogLuv);
  small.add_channel("M");
  CHECK_THROWS_AS(apply_bank(small, build_cb11(4)), ConfigError);
  ChannelStack cnn(20, 20, Provenance::Cnn, "conv3");
  cnn.add_channel("c0");
  CHECK_THROWS_AS(apply_bank(cnn, build_cb11(1)), ConfigError);
}
