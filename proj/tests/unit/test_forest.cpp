#include <doctest.h>

#include <cmath>
#include <random>

#include "hcd/error.hpp"
#include "hcd/forest.hpp"
#include "hcd/pipeline_io.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"
#include "test_paths.hpp"

using namespace hcd;

namespace {

Tree random_tree(std::mt19937_64& rng, std::size_t dim, int depth) {
  std::uniform_int_distribution<std::size_t> feat(0, dim - 1);
  std::uniform_real_distribution<double> u(-1, 1);
  Tree t;
  std::function<std::int32_t(int)> grow = [&](int d) -> std::int32_t {
    const auto idx = static_cast<std::int32_t>(t.nodes.size());
    t.nodes.push_back({});
    if (d == depth || u(rng) < -0.6) {
      t.nodes[idx].value = u(rng);
      return idx;
    }
    t.nodes[idx].feature = static_cast<std::int32_t>(feat(rng));
    t.nodes[idx].threshold = u(rng);
    const auto l = grow(d + 1);
    const auto r = grow(d + 1);
    t.nodes[idx].left = l;
    t.nodes[idx].right = r;
    return idx;
  };
  grow(0);
  return t;
}

FeatureVector vec(std::vector<float> v) {
  FeatureVector fv;
  fv.layout = {{"test", v.size(), 1, 1}};
  fv.values = std::move(v);
  return fv;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.stages = {4};
  cfg.final_trees = 4;
  cfg.stage0 = Stage0Transform::None;
  return cfg;
}

}  // namespace

TEST_CASE("score: stage-0 and additivity") {
  Forest f;
  f.feature_dim = 3;
  f.stage0_weight = 1.0;
  f.stage0_transform = Stage0Transform::Logit;
  CHECK(score(f, vec({0, 0, 0}), 0.5) == 0.0);
  CHECK(stage0_transform_value(Stage0Transform::Logit, 0.0) == doctest::Approx(std::log(1e-6 / (1 - 1e-6))));

  Forest g;
  g.feature_dim = 2;
  g.stage0_transform = Stage0Transform::None;
  g.trees.push_back(Tree::leaf(0.37));
  CHECK(score(g, vec({5, -3}), 0.9) == 0.37);
  CHECK_THROWS_AS(score(g, vec({1, 2, 3}), 0.5), DataError);
}

TEST_CASE("score: equals independent re-traversal of random trees") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Forest f;
    f.feature_dim = 6;
    f.stage0_transform = Stage0Transform::Linear;
    f.stage0_weight = 0.3;
    for (int t = 0; t < 10; ++t) f.trees.push_back(random_tree(rng, 6, 5));
    std::vector<float> x(6);
    for (auto& v : x) v = u(rng);
    double ref = 0.3 * 0.7;
    for (const auto& t : f.trees) ref += oracle::tree_value(t, x);
    CHECK(score(f, vec(x), 0.7) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("train_realboost: separable pair") {
  SampleSet s(1);
  const float one = 1, zero = 0;
  s.add({&one, 1}, +1, 0.5);
  s.add({&zero, 1}, -1, 0.5);
  const auto f = train_realboost(s, 1, Forest{}, small_config());
  REQUIRE(f.trees.size() == 1);
  const auto& root = f.trees[0].nodes[0];
  REQUIRE_FALSE(root.is_leaf());
  CHECK(root.threshold > 0.0);
  CHECK(root.threshold < 1.0);
  CHECK(f.score_raw({&one, 1}, 0.5) > 0);
  CHECK(f.score_raw({&zero, 1}, 0.5) < 0);
}

TEST_CASE("train_realboost: one-class and non-finite input are rejected") {
  SampleSet s(1);
  const float a = 1;
  s.add({&a, 1}, +1, 0.5);
  CHECK_THROWS_AS(train_realboost(s, 1, Forest{}, small_config()), DataError);
  const float bad = std::nanf("");
  CHECK_THROWS_AS(s.add({&bad, 1}, -1, 0.5), DataError);
  CHECK_THROWS_AS(s.add({&a, 1}, 0, 0.5), DataError);
}

TEST_CASE("train_realboost: loss never increases and trees beat chance") {
  const auto set = synthetic::noisy_blobs(400, 5, 7);
  TrainConfig cfg = small_config();
  TrainLog log;
  const auto f = train_realboost(set, 40, Forest{}, cfg, &log);
  REQUIRE(log.rounds.size() == 40);
  for (const auto& r : log.rounds) {
    CHECK(r.loss_after <= r.loss_before + 1e-9);
    CHECK(r.weighted_error < 0.5);
  }
  for (const auto& t : f.trees) CHECK(t.depth() <= cfg.max_depth);
  CHECK(log.rounds.back().loss_after == doctest::Approx(exponential_loss(f, set)).epsilon(1e-9));
}

TEST_CASE("train_realboost: deterministic for a fixed seed") {
  const auto set = synthetic::noisy_blobs(300, 8, 3);
  TrainConfig cfg = small_config();
  cfg.feature_fraction = 0.5;
  cfg.rng_seed = 99;
  const auto a = train_realboost(set, 15, Forest{}, cfg);
  const auto b = train_realboost(set, 15, Forest{}, cfg);
  CHECK(encode_forest(a) == encode_forest(b));
  cfg.rng_seed = 100;
  const auto c = train_realboost(set, 15, Forest{}, cfg);
  CHECK(encode_forest(a) != encode_forest(c));
}

TEST_CASE("train_realboost: split structure survives monotone feature transforms") {
  const auto set = synthetic::noisy_blobs(250, 4, 5);
  SampleSet warped(set.dim());
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::vector<float> x(set.row(i).begin(), set.row(i).end());
    x[2] = std::exp(x[2]);  // strictly increasing
    warped.add(x, set.label(i), set.proposal_score(i));
  }
  const auto cfg = small_config();
  const auto a = train_realboost(set, 10, Forest{}, cfg);
  const auto b = train_realboost(warped, 10, Forest{}, cfg);
  REQUIRE(a.trees.size() == b.trees.size());
  for (std::size_t t = 0; t < a.trees.size(); ++t) {
    REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
    for (std::size_t n = 0; n < a.trees[t].nodes.size(); ++n) {
      CHECK(a.trees[t].nodes[n].feature == b.trees[t].nodes[n].feature);
      CHECK(a.trees[t].nodes[n].left == b.trees[t].nodes[n].left);
    }
  }
  for (std::size_t i = 0; i < set.size(); ++i)
    CHECK(std::fabs(a.score_raw(set.row(i), 0.5) - b.score_raw(warped.row(i), 0.5)) <= 1e-9);
}

TEST_CASE("fit_stage0: informative scores get a positive weight") {
  const auto set = synthetic::noisy_blobs(300, 3, 11);
  const double a = fit_stage0(set, Stage0Transform::Logit);
  CHECK(a > 0.0);
  Forest with;
  with.feature_dim = set.dim();
  with.stage0_weight = a;
  Forest without = with;
  without.stage0_weight = 0.0;
  CHECK(exponential_loss(with, set) < exponential_loss(without, set));
  CHECK(fit_stage0(set, Stage0Transform::None) == 0.0);
}

TEST_CASE("label_proposals") {
  const std::vector<BoundingBox> gt{{0, 0, 10, 10}};
  const std::vector<Proposal> ps{{{0, 0, 10, 10}, 0.9, "a"}, {{50, 50, 10, 10}, 0.9, "a"}, {{5, 0, 10, 10}, 0.9, "a"}};
  CHECK(label_proposals(ps, gt) == std::vector<int>{1, -1, -1});
  CHECK(label_proposals(ps, gt, 0.5, 0.3) == std::vector<int>{1, -1, 0});
  CHECK_THROWS_AS(label_proposals(ps, gt, 0.3, 0.5), ConfigError);
}

TEST_CASE("bootstrap_train: schedule, mining and final size") {
  synthetic::BlobSource src(30, 60, 6, 21);
  TrainConfig cfg;
  cfg.stages = {4, 8, 12};
  cfg.final_trees = 16;
  cfg.initial_negatives = 200;
  cfg.negatives_per_stage_cap = 100;
  cfg.stage0 = Stage0Transform::Logit;
  TrainLog log;
  std::vector<std::size_t> sizes;
  const auto f = bootstrap_train(src, cfg, &log, [&](int, const Forest& fr) { sizes.push_back(fr.trees.size()); });
  CHECK(f.trees.size() == 16);
  CHECK(sizes == std::vector<std::size_t>{4, 8, 12, 16});
  REQUIRE(log.mining.size() == 3);
  std::size_t pool = 200;
  for (const auto& m : log.mining) {
    CHECK(m.mined_scores.size() <= 100);
    for (double s : m.mined_scores) CHECK(s >= cfg.hard_negative_score_floor);
    CHECK(std::is_sorted(m.mined_scores.rbegin(), m.mined_scores.rend()));
    pool += m.mined_scores.size();
    CHECK(m.pool_negatives == pool);
  }
  CHECK(log.rounds.size() == 16);

  synthetic::BlobSource empty(5, 10, 6, 1, /*positives=*/false);
  CHECK_THROWS_AS(bootstrap_train(empty, cfg), DataError);
}

TEST_CASE("forest file: binary and JSON round-trips") {
  std::mt19937_64 rng(2);
  Forest f;
  f.feature_dim = 9;
  f.stage0_transform = Stage0Transform::Logit;
  f.stage0_weight = 0.123456789;
  f.config_hash = 0xDEADBEEFCAFEF00Dull;
  for (int t = 0; t < 12; ++t) f.trees.push_back(random_tree(rng, 9, 5).preordered());
  const auto dir = test_tmp_dir("forest");
  save_forest(f, dir / "f.hcdf");
  const auto back = load_forest(dir / "f.hcdf");
  CHECK(back == f);
  CHECK(encode_forest(back) == read_file(dir / "f.hcdf"));
  CHECK(forest_from_json(forest_to_json(f)) == f);

  auto bytes = encode_forest(f);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_forest(bytes), ParseError);
  bytes = encode_forest(f);
  bytes[0] = 'Z';
  CHECK_THROWS_AS(decode_forest(bytes), ParseError);
  Forest narrow = f;
  narrow.feature_dim = 1;
  CHECK_THROWS_AS(decode_forest(encode_forest(narrow)), ParseError);
}
