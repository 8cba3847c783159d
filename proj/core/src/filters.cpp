#include "hcd/filters.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <unordered_set>

#include "hcd/error.hpp"

namespace hcd {

double Kernel::sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }

bool Filter::applies_to(const std::string& channel) const {
  return applicable_channels.empty() ||
         std::ranges::find(applicable_channels, channel) != applicable_channels.end();
}

std::vector<const Filter*> FilterBank::filters_for(const std::string& channel) const {
  std::vector<const Filter*> out;
  for (const auto& f : filters)
    if (f.applies_to(channel)) out.push_back(&f);
  return out;
}

void FilterBank::validate() const {
  std::unordered_set<std::string> names;
  for (const auto& f : filters) {
    if (!names.insert(f.name).second) throw ConfigError("duplicate filter name " + f.name);
    if (f.kernel.rows < 1 || f.kernel.cols < 1 ||
        f.kernel.values.size() != static_cast<std::size_t>(f.kernel.rows) * f.kernel.cols)
      throw ConfigError("filter " + f.name + " has an empty or malformed kernel");
    if (f.kernel.rows != f.cell_rows * cell_pixel_size ||
        f.kernel.cols != f.cell_cols * cell_pixel_size)
      throw ConfigError("filter " + f.name + " kernel dims disagree with its cell span");
  }
}

namespace {

Kernel replicate_cells(int cell_rows, int cell_cols, const std::vector<double>& cells, int cps) {
  Kernel k{cell_rows * cps, cell_cols * cps, {}};
  k.values.resize(static_cast<std::size_t>(k.rows) * k.cols);
  for (int r = 0; r < k.rows; ++r)
    for (int c = 0; c < k.cols; ++c)
      k.values[static_cast<std::size_t>(r) * k.cols + c] = cells[(r / cps) * cell_cols + c / cps];
  return k;
}

// 2×2 cell patterns, row-major [top-left, top-right, bottom-left, bottom-right].
// The first eight are every ±1 pattern up to global sign; the last three are
// the single-row, single-column and diagonal two-cell differences.
struct CellPattern {
  const char* name;
  std::array<double, 4> cells;
};
constexpr std::array<CellPattern, 11> kCheckerboards11 = {{
    {"uniform", {+1, +1, +1, +1}},
    {"step_h", {+1, +1, -1, -1}},
    {"step_v", {+1, -1, +1, -1}},
    {"checker", {+1, -1, -1, +1}},
    {"corner_tl", {-1, +1, +1, +1}},
    {"corner_tr", {+1, -1, +1, +1}},
    {"corner_bl", {+1, +1, -1, +1}},
    {"corner_br", {+1, +1, +1, -1}},
    {"diff_h", {+1, -1, 0, 0}},
    {"diff_v", {+1, 0, -1, 0}},
    {"diff_d", {+1, 0, 0, -1}},
}};

// ±1 step across direction (cos θ, sin θ) over an n×n cell grid centred on the grid.
std::vector<double> step_cells(int n, double theta) {
  std::vector<double> cells(static_cast<std::size_t>(n) * n);
  const double c = std::cos(theta), s = std::sin(theta);
  const double mid = (n - 1) / 2.0;
  for (int r = 0; r < n; ++r)
    for (int q = 0; q < n; ++q) {
      const double d = c * (q - mid) + s * (r - mid);
      cells[static_cast<std::size_t>(r) * n + q] = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
    }
  return cells;
}

constexpr std::array<int, 3> kRotatedScales = {4, 8, 16};

// A kernel expressed as weighted axis-aligned rectangles in kernel coordinates.
struct Rect {
  int r0, c0, r1, c1;
  double weight;
};

std::vector<Rect> rects_for_value(const Kernel& k, const std::vector<double>& residual, double v) {
  std::vector<Rect> done, open;
  for (int r = 0; r < k.rows; ++r) {
    std::vector<std::pair<int, int>> runs;
    for (int c = 0; c < k.cols;) {
      if (residual[static_cast<std::size_t>(r) * k.cols + c] != v) {
        ++c;
        continue;
      }
      int e = c;
      while (e < k.cols && residual[static_cast<std::size_t>(r) * k.cols + e] == v) ++e;
      runs.emplace_back(c, e);
      c = e;
    }
    std::vector<Rect> next;
    for (auto [c0, c1] : runs) {
      auto it = std::ranges::find_if(open, [&](const Rect& o) { return o.c0 == c0 && o.c1 == c1; });
      if (it != open.end()) {
        Rect ext = *it;
        ext.r1 = r + 1;
        next.push_back(ext);
        open.erase(it);
      } else {
        next.push_back({r, c0, r + 1, c1, v});
      }
    }
    done.insert(done.end(), open.begin(), open.end());
    open = std::move(next);
  }
  done.insert(done.end(), open.begin(), open.end());
  return done;
}

// Minimal rectangle decomposition over a choice of base offset.
std::vector<Rect> decompose(const Kernel& k) {
  std::set<double> distinct(k.values.begin(), k.values.end());
  std::vector<double> bases{0.0};
  for (double v : distinct)
    if (v != 0.0) bases.push_back(v);

  std::vector<Rect> best;
  bool have = false;
  for (double base : bases) {
    std::vector<double> residual(k.values.size());
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = k.values[i] - base;
    std::vector<Rect> rects;
    if (base != 0.0) rects.push_back({0, 0, k.rows, k.cols, base});
    std::set<double> vals(residual.begin(), residual.end());
    for (double v : vals) {
      if (v == 0.0) continue;
      auto part = rects_for_value(k, residual, v);
      rects.insert(rects.end(), part.begin(), part.end());
    }
    if (!have || rects.size() < best.size()) {
      best = std::move(rects);
      have = true;
    }
  }
  return best;
}

}  // namespace

FilterBank build_cb11(int cell_pixel_size) {
  if (cell_pixel_size < 1) throw ConfigError("cell_pixel_size must be >= 1");
  FilterBank bank{"cb11", {}, cell_pixel_size};
  for (const auto& p : kCheckerboards11) {
    Filter f;
    f.name = p.name;
    f.cell_rows = f.cell_cols = 2;
    f.kernel = replicate_cells(2, 2, {p.cells.begin(), p.cells.end()}, cell_pixel_size);
    bank.filters.push_back(std::move(f));
  }
  return bank;
}

FilterBank build_rotated_filters(int cell_pixel_size) {
  if (cell_pixel_size < 1) throw ConfigError("cell_pixel_size must be >= 1");
  FilterBank bank{"rf9", {}, cell_pixel_size};
  auto add = [&](std::string name, int n, std::vector<double> cells,
                 std::vector<std::string> channels) {
    Filter f;
    f.name = std::move(name);
    f.cell_rows = f.cell_cols = n;
    f.kernel = replicate_cells(n, n, cells, cell_pixel_size);
    f.applicable_channels = std::move(channels);
    bank.filters.push_back(std::move(f));
  };

  for (int n : kRotatedScales)
    add("box" + std::to_string(n), n, std::vector<double>(static_cast<std::size_t>(n) * n, 1.0),
        {});
  const std::vector<std::string> unoriented{"M", "L", "U", "V"};
  for (int n : kRotatedScales) {
    add("stepA" + std::to_string(n), n, step_cells(n, 0.0), unoriented);
    add("stepB" + std::to_string(n), n, step_cells(n, std::numbers::pi / 2), unoriented);
  }
  for (int b = 0; b < 6; ++b) {
    const double theta = b * std::numbers::pi / 6;
    const std::string deg = "_r" + std::to_string(b * 30);
    for (int n : kRotatedScales) {
      add("stepA" + std::to_string(n) + deg, n, step_cells(n, theta), {"O" + std::to_string(b)});
      add("stepB" + std::to_string(n) + deg, n, step_cells(n, theta + std::numbers::pi / 2),
          {"O" + std::to_string(b)});
    }
  }
  return bank;
}

FilterBank bank_by_name(const std::string& name) {
  if (name == "cb11") return build_cb11();
  if (name == "rf9") return build_rotated_filters();
  throw ConfigError("unknown filter bank '" + name + "' (expected hogluv, cb11 or rf9)");
}

ChannelStack apply_bank(const ChannelStack& stack, const FilterBank& bank) {
  if (stack.provenance() != Provenance::HogLuv)
    throw ConfigError("filter banks apply to HOG+LUV stacks only");
  bank.validate();
  const int w = stack.width(), h = stack.height();

  int pad = 0;
  for (const auto& f : bank.filters) {
    if (f.kernel.rows > h || f.kernel.cols > w)
      throw ConfigError("kernel " + f.name + " (" + std::to_string(f.kernel.rows) + "x" +
                        std::to_string(f.kernel.cols) + ") is larger than the " +
                        std::to_string(h) + "x" + std::to_string(w) + " plane");
    pad = std::max({pad, f.kernel.rows, f.kernel.cols});
  }

  std::vector<std::vector<Rect>> rects;
  for (const auto& f : bank.filters) rects.push_back(decompose(f.kernel));

  ChannelStack out(w, h, Provenance::Filtered, bank.name, stack.downsample_factor());
  const int iw = w + 2 * pad + 1, ih = h + 2 * pad + 1;
  std::vector<double> integral(static_cast<std::size_t>(iw) * ih);

  for (std::size_t c = 0; c < stack.num_channels(); ++c) {
    const auto src = stack.plane(c);
    // Integral image of the zero-padded plane.
    std::fill(integral.begin(), integral.end(), 0.0);
    for (int y = 1; y < ih; ++y) {
      const int sy = y - 1 - pad;
      double row = 0.0;
      for (int x = 1; x < iw; ++x) {
        const int sx = x - 1 - pad;
        if (sy >= 0 && sy < h && sx >= 0 && sx < w) row += src[static_cast<std::size_t>(sy) * w + sx];
        integral[static_cast<std::size_t>(y) * iw + x] =
            integral[static_cast<std::size_t>(y - 1) * iw + x] + row;
      }
    }

    for (std::size_t fi = 0; fi < bank.filters.size(); ++fi) {
      const auto& f = bank.filters[fi];
      if (!f.applies_to(stack.name(c))) continue;
      auto dst = out.add_channel(stack.name(c) + ":" + f.name);
      const int ay = (f.kernel.rows - 1) / 2, ax = (f.kernel.cols - 1) / 2;
      for (const auto& r : rects[fi]) {
        const int dy0 = r.r0 - ay + pad, dy1 = r.r1 - ay + pad;
        const int dx0 = r.c0 - ax + pad, dx1 = r.c1 - ax + pad;
        for (int y = 0; y < h; ++y) {
          const double* top = integral.data() + static_cast<std::size_t>(y + dy0) * iw;
          const double* bot = integral.data() + static_cast<std::size_t>(y + dy1) * iw;
          double* o = dst.data() + static_cast<std::size_t>(y) * w;
          for (int x = 0; x < w; ++x)
            o[x] += r.weight * (bot[x + dx1] - bot[x + dx0] - top[x + dx1] + top[x + dx0]);
        }
      }
    }
  }
  return out;
}

ChannelStack compute_channels(const Image& img, const std::string& bank_name,
                              const ChannelConfig& cfg) {
  if (bank_name == "hogluv") return compute_hogluv(img, cfg);
  return apply_bank(compute_hogluv(img, cfg), bank_by_name(bank_name));
}

std::size_t bank_output_channels(const std::string& bank_name) {
  if (bank_name == "hogluv") return kHogLuvChannels;
  const auto bank = bank_by_name(bank_name);
  static const std::array<const char*, 10> kNames = {"M",  "O0", "O1", "O2", "O3",
                                                     "O4", "O5", "L",  "U",  "V"};
  std::size_t n = 0;
  for (const char* ch : kNames) n += bank.filters_for(ch).size();
  return n;
}

}  // namespace hcd
