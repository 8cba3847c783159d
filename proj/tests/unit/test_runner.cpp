#include <doctest.h>

#include <cmath>
#include <fstream>

#include "hcd/config.hpp"
#include "hcd/error.hpp"
#include "hcd/runner.hpp"
#include "test_paths.hpp"
#include "toy_dataset.hpp"

using namespace hcd;
namespace fs = std::filesystem;

namespace {

const toy::Paths& small_toy() {
  static const toy::Paths paths = [] {
    toy::Options opt;
    opt.train_images = 3;
    opt.test_images = 2;
    return toy::generate(test_tmp_dir("runner_toy"), opt);
  }();
  return paths;
}

RunConfig fast_config(const std::string& preset = "table1-hogluv") {
  auto c = preset_config(preset);
  c.handcrafted_roi = 7;
  c.train.stages = {2, 4};
  c.train.final_trees = 6;
  c.train.max_depth = 2;
  c.train.initial_negatives = 40;
  c.train.negatives_per_stage_cap = 20;
  c.train.feature_fraction = 0.2;
  return c;
}

const Proposal* find_box(const std::vector<Proposal>& dets, const std::string& id, const BoundingBox& b) {
  for (const auto& d : dets)
    if (d.image_id == id && std::fabs(d.box.x - b.x) < 1e-9 && std::fabs(d.box.y - b.y) < 1e-9 &&
        std::fabs(d.box.w - b.w) < 1e-9 && std::fabs(d.box.h - b.h) < 1e-9)
      return &d;
  return nullptr;
}

}  // namespace

TEST_CASE("toy generator is deterministic") {
  toy::Options opt;
  const auto a = toy::make_scene("x", 42, opt);
  const auto b = toy::make_scene("x", 42, opt);
  CHECK(a.image.plane(0)[100] == b.image.plane(0)[100]);
  CHECK(a.proposals == b.proposals);
  CHECK(a.annotation == b.annotation);
  CHECK_NOTHROW(a.image.validate());
  CHECK_FALSE(a.annotation.boxes.empty());
}

TEST_CASE("prepare_image maps into the resized frame") {
  const auto m = load_manifest(small_toy().train_manifest);
  const auto cfg = fast_config();
  const auto p = prepare_image(m, 0, cfg, 1000);
  CHECK(p.image.height() == m.resize_shorter_edge);
  CHECK(p.box_scale == doctest::Approx(300.0 / 240.0));
  REQUIRE(p.boxes.size() == m.entries[0].annotation.boxes.size());
  const auto& orig = m.entries[0].annotation.boxes[0].box;
  CHECK(p.boxes[0].box.x == doctest::Approx(orig.x * p.box_scale));
  // Original -> resized -> original within half a pixel.
  const auto back = scale_box(p.boxes[0].box, 1.0 / p.box_scale);
  CHECK(std::fabs(back.x - orig.x) <= 0.5);
  CHECK(std::fabs(back.h - orig.h) <= 0.5);
  for (std::size_t i = 0; i < p.proposals.size(); ++i)
    for (std::size_t j = i + 1; j < p.proposals.size(); ++j)
      CHECK(iou(p.proposals[i].box, p.proposals[j].box) <= cfg.proposals.nms);
  const auto top3 = prepare_image(m, 0, cfg, 3);
  CHECK(top3.proposals.size() == 3);
}

TEST_CASE("training source labels and ground-truth injection") {
  const auto m = load_manifest(small_toy().train_manifest);
  const auto cfg = fast_config();
  ManifestTrainingSource src(m, cfg);
  CHECK(src.num_images() == 3);
  CHECK(src.feature_dim() == 10 * 7 * 7);
  CHECK(src.num_positives() > 0);
  CHECK(src.num_negatives() > 0);
  const auto p = prepare_image(m, 0, cfg, cfg.proposals.train_topk);
  const auto& cands = src.candidates(0);
  CHECK(cands.size() == p.proposals.size() + p.boxes.size());
  for (std::size_t k = 0; k < p.proposals.size(); ++k) {
    double best = 0;
    for (const auto& b : p.boxes) best = std::max(best, iou(cands[k].proposal.box, b.box));
    CHECK(cands[k].label == (best >= 0.5 ? 1 : -1));
  }
  const std::vector<std::size_t> which{0, cands.size() - 1};
  const auto f1 = src.features(0, which);
  const auto f2 = src.features(0, which);
  CHECK(f1 == f2);
  CHECK(f1[0].size() == src.feature_dim());
}

TEST_CASE("train, detect and evaluate end to end") {
  const auto& toy = small_toy();
  const auto train = load_manifest(toy.train_manifest);
  const auto test = load_manifest(toy.test_manifest);
  auto cfg = fast_config();
  cfg.proposals.test_topk = 5;
  const auto out = test_tmp_dir("runner_train");
  const auto r = train_detector(train, cfg, out, {});
  CHECK(r.forest.trees.size() == 6);
  CHECK(r.forest.config_hash == config_hash(cfg));
  for (const char* f : {"forest.hcdf", "config.json", "train_log.csv", "mining.csv"}) CHECK(fs::exists(out / f));
  CHECK(load_forest(out / "forest.hcdf") == r.forest);
  CHECK(load_config(out / "config.json").train.final_trees == 6);

  const auto again = train_detector(train, cfg, {}, {});
  CHECK(encode_forest(again.forest) == encode_forest(r.forest));

  const auto dets = detect(test, &r.forest, cfg, {});
  for (const auto& e : test.entries) {
    std::size_t n = 0;
    double prev = INFINITY;
    for (const auto& d : dets)
      if (d.image_id == e.image_id) {
        ++n;
        CHECK(d.score <= prev);
        prev = d.score;
      }
    CHECK(n <= 5);
  }

  // Library-level score of a sampled proposal equals its detection score.
  const auto p = prepare_image(test, 0, cfg, cfg.proposals.test_topk);
  FeatureExtractor ex(test, cfg);
  const auto stacks = ex.stacks(p);
  const auto& q = p.proposals.front();
  const double s = score(r.forest, ex.extract(stacks, q.box), q.score);
  const auto* d = find_box(dets, p.image_id, scale_box(q.box, 1.0 / p.box_scale));
  REQUIRE(d != nullptr);
  CHECK(d->score == s);

  const auto dets2 = detect(test, &r.forest, cfg, {});
  CHECK(dets2 == dets);

  const auto path = out / "dets.jsonl";
  save_detections(dets, config_hash(cfg), path);
  const auto file = load_detections(path);
  CHECK(file.detections == dets);
  REQUIRE(file.config_hash);
  CHECK(*file.config_hash == config_hash(cfg));

  EvalConfig ev;
  ev.subsets = {"reasonable", "all"};
  const auto res = evaluate(test, dets, ev);
  REQUIRE(res.size() == 2);
  write_eval_outputs(res, config_hash(cfg), out / "eval");
  for (const char* f : {"summary.json", "curve.csv", "curve_reasonable.csv", "curve_all.csv", "curve.svg"})
    CHECK(fs::exists(out / "eval" / f));
  const auto summary = eval_summary_json(res, config_hash(cfg));
  const auto back = results_from_summary(summary);
  REQUIRE(back.size() == 2);
  CHECK(back[0].curve.log_average_mr == res[0].curve.log_average_mr);
  CHECK(back[1].curve.points.size() == res[1].curve.points.size());
  const auto csv = read_file(out / "eval" / "curve.csv");
  CHECK(std::string(csv.begin(), csv.end()).rfind("# config_hash=" + hash_to_hex(config_hash(cfg)) + "\n", 0) == 0);

  // A forest for a different feature layout is rejected with both sizes named.
  auto wide = cfg;
  wide.handcrafted_roi = 14;
  try {
    detect(test, &r.forest, wide, {});
    FAIL("expected a dimension mismatch");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(r.forest.feature_dim)) != std::string::npos);
    CHECK(msg.find(std::to_string(10 * 14 * 14)) != std::string::npos);
  }
}

TEST_CASE("detect: proposal-score baseline and empty proposal files") {
  const auto& toy = small_toy();
  auto m = load_manifest(toy.test_manifest);
  auto cfg = fast_config();
  const auto dets = detect(m, nullptr, cfg, {});
  CHECK_FALSE(dets.empty());
  write_text_atomic(m.root / "proposals" / "empty.jsonl", "");
  m.entries[0].proposals = "proposals/empty.jsonl";
  const auto dets2 = detect(m, nullptr, cfg, {});
  for (const auto& d : dets2) CHECK(d.image_id != m.entries[0].image_id);
}

TEST_CASE("compute_channels_for_manifest is resumable and reused by training") {
  const auto& toy = small_toy();
  const auto train = load_manifest(toy.train_manifest);
  const auto cfg = fast_config("table1-hogluv");
  const auto dir = test_tmp_dir("runner_channels");
  const auto first = compute_channels_for_manifest(train, cfg, dir, {});
  CHECK(first.written == 3);
  CHECK(first.failures.empty());
  const auto t = load_tensor(channel_tensor_path(dir, cfg, train.entries[0].image_id), Provenance::HogLuv, "hogluv");
  CHECK(t.num_channels() == 10);
  const auto second = compute_channels_for_manifest(train, cfg, dir, {});
  CHECK(second.written == 0);
  CHECK(second.skipped == 3);

  RunOptions cached;
  cached.channels_dir = dir;
  const auto a = train_detector(train, cfg, {}, cached);
  const auto b = train_detector(train, cfg, {}, {});
  CHECK(encode_forest(a.forest) == encode_forest(b.forest));

  auto other = cfg;
  other.channels.smooth_radius = 2;
  CHECK_THROWS_AS(compute_channels_for_manifest(train, other, dir, {}), ConfigError);
  CHECK_THROWS_AS(FeatureExtractor(train, other, cached), ConfigError);

  auto broken = train;
  broken.entries[1].image = "images/nope.png";
  const auto dir2 = test_tmp_dir("runner_channels_fail");
  const auto rep = compute_channels_for_manifest(broken, cfg, dir2, {});
  CHECK(rep.written == 2);
  REQUIRE(rep.failures.size() == 1);
  CHECK(rep.failures[0].first == broken.entries[1].image_id);
}

TEST_CASE("cb11 channel files carry 110 channels") {
  const auto& toy = small_toy();
  auto m = load_manifest(toy.test_manifest);
  m.entries.resize(1);
  const auto cfg = fast_config("table1-cb11");
  const auto dir = test_tmp_dir("runner_cb11");
  compute_channels_for_manifest(m, cfg, dir, {});
  CHECK(load_tensor(channel_tensor_path(dir, cfg, m.entries[0].image_id), Provenance::Filtered, "cb11").num_channels() ==
        110);
}

TEST_CASE("CNN features: fusion layout and missing tensors") {
  const auto& toy = small_toy();
  auto m = load_manifest(toy.test_manifest);
  auto cfg = fast_config("table2-rf-conv3");
  cfg.bank = "hogluv";
  cfg.l2_normalize_cnn = true;
  FeatureExtractor ex(m, cfg);
  CHECK(ex.cnn_channels() == 8);
  CHECK(ex.dim() == 10 * 49 + 8 * 49);
  const auto p = prepare_image(m, 0, cfg, 10);
  const auto fv = ex.extract(ex.stacks(p), p.proposals[0].box);
  REQUIRE(fv.layout.size() == 2);
  CHECK(fv.layout[1].source == "cnn:conv3");
  double norm = 0;
  for (float v : fv.part(1)) norm += double(v) * v;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-5));

  m.entries[1].cnn_tensor.reset();
  CHECK_THROWS_AS(FeatureExtractor(m, cfg), DataError);
}

TEST_CASE("detections: hash consistency and unknown images") {
  const auto dir = test_tmp_dir("runner_dets");
  write_text_atomic(dir / "mixed.jsonl",
                    "{\"image_id\":\"a\",\"x\":0,\"y\":0,\"w\":1,\"h\":1,\"score\":1,\"config_hash\":\"0000000000000001\"}\n"
                    "{\"image_id\":\"a\",\"x\":0,\"y\":0,\"w\":1,\"h\":1,\"score\":1,\"config_hash\":\"0000000000000002\"}\n");
  CHECK_THROWS_AS(load_detections(dir / "mixed.jsonl"), DataError);
  write_text_atomic(dir / "plain.jsonl", "{\"image_id\":\"a\",\"x\":0,\"y\":0,\"w\":1,\"h\":1,\"score\":1}\n");
  CHECK_FALSE(load_detections(dir / "plain.jsonl").config_hash);

  const auto m = load_manifest(small_toy().test_manifest);
  CHECK_THROWS_AS(evaluate(m, {{{0, 0, 1, 1}, 1.0, "ghost"}}, EvalConfig{}), DataError);
}

TEST_CASE("parallel_for and HCD_JOBS") {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::count(hits.begin(), hits.end(), 1) == 100);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 7) throw DataError("boom");
                  }),
                  DataError);
  setenv("HCD_JOBS", "3", 1);
  CHECK(default_jobs() == 3);
  setenv("HCD_JOBS", "zero", 1);
  CHECK_THROWS_AS(default_jobs(), ConfigError);
  unsetenv("HCD_JOBS");
  CHECK(default_jobs() == 1);
}
