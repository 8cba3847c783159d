#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "hcd/error.hpp"
#include "hcd/evaluation.hpp"
#include "test_paths.hpp"

using namespace hcd;

namespace {

AnnotatedBox gt(double x, double y, double w, double h, double vis = 1.0, bool ignore = false) {
  return {{x, y, w, h}, h, vis, ignore};
}

Proposal det(double x, double y, double w, double h, double s) { return {{x, y, w, h}, s, "i"}; }

std::vector<ImageMatch> match_fixture(const SubsetFilter& f) {
  const auto dir = test_data_dir() / "eval_fixture";
  const auto anns = load_annotations(dir / "annotations.jsonl");
  const auto dets = load_proposals(dir / "detections.jsonl");
  std::vector<ImageMatch> runs;
  for (const auto& a : anns) {
    std::vector<Proposal> mine;
    for (const auto& d : dets)
      if (d.image_id == a.image_id) mine.push_back(d);
    runs.push_back(match_detections(mine, a.boxes, f));
  }
  return runs;
}

}  // namespace

TEST_CASE("subset filters") {
  const auto r = subset_by_name("reasonable");
  CHECK(r.accepts({{0, 0, 20, 50}, 50, 0.65, false}));
  CHECK_FALSE(r.accepts({{0, 0, 20, 49}, 49, 1.0, false}));
  const AnnotatedBox half{{0, 0, 40, 100}, 100, 0.5, false};
  CHECK_FALSE(r.accepts(half));
  CHECK(subset_by_name("heavy").accepts(half));
  CHECK_FALSE(subset_by_name("partial").accepts(half));
  CHECK(subset_by_name("partial").accepts({{0, 0, 20, 60}, 60, 0.9, false}));
  CHECK_FALSE(subset_by_name("partial").accepts({{0, 0, 20, 60}, 60, 1.0, false}));
  CHECK(subset_by_name("near").accepts({{0, 0, 20, 80}, 80, 0.1, false}));
  CHECK(subset_by_name("medium").accepts({{0, 0, 20, 30}, 30, 1.0, false}));
  CHECK_FALSE(subset_by_name("medium").accepts({{0, 0, 20, 81}, 81, 1.0, false}));
  CHECK_THROWS_AS(subset_by_name("tiny"), ConfigError);

  const auto part = filter_subset({gt(0, 0, 20, 60), gt(0, 0, 20, 40), gt(5, 5, 30, 90, 1.0, true)}, r);
  CHECK(part.targets.size() == 1);
  CHECK(part.ignore.size() == 2);
}

TEST_CASE("match_detections: trivial cases") {
  const SubsetFilter all = subset_by_name("all");
  auto m = match_detections({det(0, 0, 20, 50, 0.9)}, {gt(0, 0, 20, 50)}, all);
  CHECK(m.outcomes == std::vector<DetOutcome>{DetOutcome::TruePositive});
  CHECK(m.target_matched == std::vector<bool>{true});

  m = match_detections({det(0, 0, 20, 50, 0.9)}, {}, all);
  CHECK(m.outcomes == std::vector<DetOutcome>{DetOutcome::FalsePositive});

  // One GT, two overlapping detections: only the higher score matches.
  m = match_detections({det(1, 0, 20, 50, 0.8), det(0, 0, 20, 50, 0.9)}, {gt(0, 0, 20, 50)}, all);
  CHECK(m.scores == std::vector<double>{0.9, 0.8});
  CHECK(m.outcomes == std::vector<DetOutcome>{DetOutcome::TruePositive, DetOutcome::FalsePositive});

  // Ignore regions absorb detections by intersection over detection area.
  const auto r = subset_by_name("reasonable");
  m = match_detections({det(0, 0, 10, 20, 0.9)}, {gt(0, 0, 100, 40)}, r);
  CHECK(m.outcomes == std::vector<DetOutcome>{DetOutcome::Ignored});
  CHECK(m.num_targets() == 0);
}

TEST_CASE("evaluator reproduces the hand-enumerated fixture") {
  const auto runs = match_fixture(subset_by_name("reasonable"));
  const auto curve = compute_mr(runs, 3);
  CHECK(curve.num_targets == 4);

  std::ifstream in(test_data_dir() / "eval_fixture" / "expected_curve.csv");
  std::string line;
  std::getline(in, line);
  std::size_t k = 0;
  while (std::getline(in, line)) {
    double thr;
    int fp, tp;
    char c;
    std::istringstream ls(line);
    ls >> thr >> c >> fp >> c >> tp;
    REQUIRE(k < curve.points.size());
    CHECK(curve.points[k].threshold == thr);
    CHECK(curve.points[k].fppi == fp / 3.0);
    CHECK(curve.points[k].miss_rate == 1.0 - tp / 4.0);
    ++k;
  }
  CHECK(k == curve.points.size());

  const std::array<double, 9> mr_ref{0.75, 0.75, 0.75, 0.75, 0.75, 0.75, 0.75, 0.75, 0.5};
  CHECK(curve.reference_mr == mr_ref);
  CHECK(curve.log_average_mr == 0.7169610588172314);
}

TEST_CASE("compute_mr: sanity cases") {
  const auto all = subset_by_name("all");
  std::vector<ImageMatch> perfect, empty;
  for (int i = 0; i < 5; ++i) {
    perfect.push_back(match_detections({det(10 * i, 0, 10, 30, 0.5 + 0.01 * i)}, {gt(10 * i, 0, 10, 30)}, all));
    empty.push_back(match_detections({}, {gt(10 * i, 0, 10, 30)}, all));
  }
  const auto p = compute_mr(perfect, 5);
  for (double mr : p.reference_mr) CHECK(mr == 0.0);
  CHECK(p.log_average_mr <= kMissRateFloor * (1 + 1e-12));
  CHECK(std::round(p.log_average_mr * 10000) / 100 == 0.0);
  CHECK(compute_mr(empty, 5).log_average_mr == 1.0);

  // Top detection is a false positive on one image: FPPI 1 before any hit,
  // so every reference below 1 falls back to the highest-threshold point.
  std::vector<ImageMatch> fp_first{match_detections({det(500, 0, 10, 30, 0.9), det(0, 0, 10, 30, 0.5)}, {gt(0, 0, 10, 30)}, all)};
  const auto c = compute_mr(fp_first, 1);
  for (int k = 0; k < 8; ++k) CHECK(c.reference_mr[k] == 1.0);
  CHECK(c.reference_mr[8] == 0.0);

  CHECK_THROWS_AS(compute_mr({match_detections({det(0, 0, 5, 5, 1)}, {}, all)}, 1), DataError);
  CHECK_THROWS_AS(compute_mr({}, 0), DataError);
}

TEST_CASE("compute_mr: monotone sweep and TP + misses = targets") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 200), s(0, 1);
  std::uniform_int_distribution<int> coarse(0, 5);
  const auto r = subset_by_name("reasonable");
  std::vector<ImageMatch> runs;
  for (int i = 0; i < 8; ++i) {
    std::vector<AnnotatedBox> gts;
    std::vector<Proposal> dets;
    for (int g = 0; g < 4; ++g) gts.push_back({{u(rng), u(rng), 25, 60 + u(rng) / 4}, 60 + u(rng) / 4, s(rng), false});
    for (int d = 0; d < 12; ++d) {
      const auto& base = gts[d % 4].box;
      const double jitter = d < 6 ? 3.0 : 80.0;
      dets.push_back({{base.x + jitter * (s(rng) - 0.5), base.y + jitter * (s(rng) - 0.5), base.w, base.h}, coarse(rng) / 5.0, "i"});
    }
    runs.push_back(match_detections(dets, gts, r));
  }
  const auto c = compute_mr(runs, 8);
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    CHECK(c.points[k].threshold < c.points[k - 1].threshold);
    CHECK(c.points[k].fppi >= c.points[k - 1].fppi);
    CHECK(c.points[k].miss_rate <= c.points[k - 1].miss_rate);
  }
  std::size_t tp = 0, matched = 0;
  for (const auto& m : runs) {
    for (auto o : m.outcomes) tp += o == DetOutcome::TruePositive;
    for (bool b : m.target_matched) matched += b;
  }
  CHECK(tp == matched);
  CHECK(c.points.back().miss_rate == doctest::Approx(1.0 - double(tp) / c.num_targets));
}

TEST_CASE("match_detections: equal-score order is fixed by input order") {
  const auto all = subset_by_name("all");
  const std::vector<Proposal> a{det(0, 0, 20, 50, 0.5), det(2, 0, 20, 50, 0.5)};
  const std::vector<Proposal> b{a[1], a[0]};
  const auto ma = match_detections(a, {gt(0, 0, 20, 50)}, all);
  const auto mb = match_detections(b, {gt(0, 0, 20, 50)}, all);
  const auto count = [](const ImageMatch& m) {
    return std::count(m.outcomes.begin(), m.outcomes.end(), DetOutcome::TruePositive);
  };
  CHECK(count(ma) == count(mb));
  CHECK(compute_mr({ma}, 1).log_average_mr == compute_mr({mb}, 1).log_average_mr);
}

TEST_CASE("curve outputs") {
  const auto curve = compute_mr(match_fixture(subset_by_name("reasonable")), 3);
  const auto csv = curve_csv(curve);
  CHECK(csv.rfind("threshold,fppi,miss_rate\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);
  const auto svg = curve_svg({{"fixture", curve}});
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("71.70% fixture") != std::string::npos);
}
