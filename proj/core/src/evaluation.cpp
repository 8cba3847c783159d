#include "hcd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "hcd/error.hpp"

namespace hcd {

bool SubsetFilter::accepts(const AnnotatedBox& gt) const {
  return gt.height_px >= min_height && gt.height_px <= max_height &&
         gt.visible_fraction >= min_visible && gt.visible_fraction <= max_visible;
}

void SubsetFilter::validate() const {
  if (!(min_height <= max_height) || !(min_visible <= max_visible))
    throw ConfigError("subset '" + name + "': min exceeds max");
}

SubsetFilter subset_by_name(const std::string& name) {
  const double inf = std::numeric_limits<double>::infinity();
  if (name == "reasonable") return {name, 50.0, inf, 0.65, 1.0};
  if (name == "partial") return {name, 50.0, inf, 0.65, 0.99};
  if (name == "heavy") return {name, 50.0, inf, 0.20, 0.64};
  if (name == "near") return {name, 80.0, inf, 0.0, 1.0};
  if (name == "medium") return {name, 30.0, 80.0, 0.0, 1.0};
  if (name == "all") return {name, 0.0, inf, 0.0, 1.0};
  throw ConfigError("unknown subset '" + name + "'");
}

std::vector<std::string> subset_names() {
  return {"reasonable", "partial", "heavy", "near", "medium", "all"};
}

GtPartition filter_subset(const std::vector<AnnotatedBox>& gts, const SubsetFilter& filter) {
  GtPartition out;
  for (const auto& g : gts) {
    if (!g.ignore && filter.accepts(g))
      out.targets.push_back(g.box);
    else
      out.ignore.push_back(g.box);
  }
  return out;
}

ImageMatch match_detections(std::vector<Proposal> dets, const GtPartition& gts, double thr) {
  std::ranges::stable_sort(dets, [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
  ImageMatch m;
  m.target_matched.assign(gts.targets.size(), false);
  for (const auto& d : dets) {
    m.scores.push_back(d.score);
    double best = thr;
    std::ptrdiff_t hit = -1;
    for (std::size_t g = 0; g < gts.targets.size(); ++g) {
      if (m.target_matched[g]) continue;
      const double o = iou(d.box, gts.targets[g]);
      if (o >= best && (hit < 0 || o > best)) {
        best = o;
        hit = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (hit >= 0) {
      m.target_matched[hit] = true;
      m.outcomes.push_back(DetOutcome::TruePositive);
      continue;
    }
    const bool ignored = std::ranges::any_of(
        gts.ignore, [&](const BoundingBox& r) { return ioa(d.box, r) >= thr; });
    m.outcomes.push_back(ignored ? DetOutcome::Ignored : DetOutcome::FalsePositive);
  }
  return m;
}

ImageMatch match_detections(const std::vector<Proposal>& dets,
                            const std::vector<AnnotatedBox>& gts, const SubsetFilter& filter,
                            double thr) {
  return match_detections(dets, filter_subset(gts, filter), thr);
}

std::array<double, 9> reference_fppi_points() {
  std::array<double, 9> r{};
  for (int i = 0; i < 9; ++i) r[i] = std::pow(10.0, -2.0 + 0.25 * i);
  return r;
}

EvalCurve compute_mr(const std::vector<ImageMatch>& runs, std::size_t num_images) {
  if (num_images == 0) throw DataError("evaluation: no images");
  EvalCurve c;
  c.num_images = num_images;
  c.reference_fppi = reference_fppi_points();

  struct Det {
    double score;
    DetOutcome outcome;
  };
  std::vector<Det> all;
  for (const auto& r : runs) {
    c.num_targets += r.num_targets();
    for (std::size_t i = 0; i < r.scores.size(); ++i) all.push_back({r.scores[i], r.outcomes[i]});
  }
  if (c.num_targets == 0) throw DataError("evaluation: no ground truth in the subset, metric undefined");
  std::ranges::stable_sort(all, [](const Det& a, const Det& b) { return a.score > b.score; });

  std::size_t tp = 0, fp = 0;
  const double n = static_cast<double>(num_images);
  const double gt = static_cast<double>(c.num_targets);
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].outcome == DetOutcome::TruePositive) ++tp;
    if (all[i].outcome == DetOutcome::FalsePositive) ++fp;
    if (i + 1 < all.size() && all[i + 1].score == all[i].score) continue;
    c.points.push_back({all[i].score, static_cast<double>(fp) / n, 1.0 - static_cast<double>(tp) / gt});
  }

  double log_sum = 0.0;
  for (int k = 0; k < 9; ++k) {
    double mr = 1.0;
    if (!c.points.empty()) {
      mr = c.points.front().miss_rate;
      for (const auto& p : c.points)
        if (p.fppi <= c.reference_fppi[k]) mr = p.miss_rate;
    }
    c.reference_mr[k] = mr;
    log_sum += std::log(std::max(mr, kMissRateFloor));
  }
  c.log_average_mr = std::exp(log_sum / 9.0);
  return c;
}

std::string curve_csv(const EvalCurve& curve) {
  std::ostringstream os;
  os << "threshold,fppi,miss_rate\n";
  char buf[96];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.fppi, p.miss_rate);
    os << buf;
  }
  return os.str();
}

std::string curve_svg(const std::vector<std::pair<std::string, EvalCurve>>& curves) {
  constexpr double W = 480, H = 400, L = 60, T = 20, PW = 390, PH = 320;
  constexpr double fx0 = -3.0, fx1 = 1.0, my0 = -2.0, my1 = 0.0;
  auto px = [&](double fppi) {
    const double lx = std::clamp(std::log10(std::max(fppi, 1e-3)), fx0, fx1);
    return L + (lx - fx0) / (fx1 - fx0) * PW;
  };
  auto py = [&](double mr) {
    const double ly = std::clamp(std::log10(std::max(mr, 1e-2)), my0, my1);
    return T + (my1 - ly) / (my1 - my0) * PH;
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" "
                "font-family=\"sans-serif\" font-size=\"11\">\n",
                W, H);
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"#000\"/>\n",
                L, T, PW, PH);
  os << buf;
  for (int e = -3; e <= 1; ++e) {
    const double x = px(std::pow(10.0, e));
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%g\" x2=\"%.1f\" y2=\"%g\" stroke=\"#ddd\"/>"
                  "<text x=\"%.1f\" y=\"%g\" text-anchor=\"middle\">1e%d</text>\n",
                  x, T, x, T + PH, x, T + PH + 14, e);
    os << buf;
  }
  for (double mr : {0.01, 0.05, 0.1, 0.2, 0.5, 1.0}) {
    const double y = py(mr);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%.1f\" x2=\"%g\" y2=\"%.1f\" stroke=\"#ddd\"/>"
                  "<text x=\"%g\" y=\"%.1f\" text-anchor=\"end\">%g</text>\n",
                  L, y, L + PW, y, L - 4, y + 4, mr);
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">false positives per image</text>\n"
                "<text x=\"14\" y=\"%g\" transform=\"rotate(-90 14 %g)\" "
                "text-anchor=\"middle\">miss rate</text>\n",
                L + PW / 2, H - 6, T + PH / 2, T + PH / 2);
  os << buf;

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& [label, c] = curves[i];
    const char* color = colors[i % std::size(colors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    double prev_mr = 1.0;
    std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(1e-3), py(prev_mr));
    os << buf;
    for (const auto& p : c.points) {
      // Step shape: fppi moves first at the old miss rate.
      std::snprintf(buf, sizeof buf, "%.1f,%.1f %.1f,%.1f ", px(p.fppi), py(prev_mr), px(p.fppi),
                    py(p.miss_rate));
      os << buf;
      prev_mr = p.miss_rate;
    }
    os << "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" fill=\"%s\">%.2f%% %s</text>\n", L + PW - 150,
                  T + 16 + 14.0 * static_cast<double>(i), color, 100.0 * c.log_average_mr,
                  label.c_str());
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace hcd
