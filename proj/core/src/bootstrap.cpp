#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "hcd/error.hpp"
#include "hcd/forest.hpp"

namespace hcd {

namespace {

using SampleKey = std::pair<std::size_t, std::size_t>;  // (image, candidate)

// Extracts features for `keys` (sorted by image) and appends them to `pool`.
void append_samples(TrainingSource& source, const std::vector<SampleKey>& keys, SampleSet& pool) {
  std::map<std::size_t, std::vector<std::size_t>> by_image;
  for (const auto& [img, idx] : keys) by_image[img].push_back(idx);
  for (const auto& [img, idxs] : by_image) {
    const auto& cands = source.candidates(img);
    const auto feats = source.features(img, idxs);
    for (std::size_t k = 0; k < idxs.size(); ++k) {
      const auto& c = cands[idxs[k]];
      pool.add(feats[k].values, c.label, c.proposal.score);
    }
  }
}

}  // namespace

Forest bootstrap_train(TrainingSource& source, const TrainConfig& cfg, TrainLog* log,
                       const StageCallback& on_stage) {
  cfg.validate();
  const std::size_t dim = source.feature_dim();

  std::vector<SampleKey> positives, negatives;
  for (std::size_t img = 0; img < source.num_images(); ++img) {
    const auto& cands = source.candidates(img);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (cands[i].label > 0) positives.emplace_back(img, i);
      if (cands[i].label < 0) negatives.emplace_back(img, i);
    }
  }
  if (positives.empty()) throw DataError("bootstrap training: empty positive pool");
  if (negatives.empty()) throw DataError("bootstrap training: no negative candidates");

  std::vector<SampleKey> initial = negatives;
  if (initial.size() > cfg.initial_negatives) {
    std::mt19937_64 rng(cfg.rng_seed);
    for (std::size_t i = 0; i < cfg.initial_negatives; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, initial.size() - 1);
      std::swap(initial[i], initial[pick(rng)]);
    }
    initial.resize(cfg.initial_negatives);
    std::ranges::sort(initial);
  }
  std::set<SampleKey> in_pool(initial.begin(), initial.end());

  SampleSet pool(dim);
  append_samples(source, positives, pool);
  append_samples(source, initial, pool);

  Forest forest;
  forest.feature_dim = dim;
  forest.stage0_transform = cfg.stage0;
  forest.stage0_weight = fit_stage0(pool, cfg.stage0);
  if (log) {
    log->stage0_weight = forest.stage0_weight;
    log->stage0_loss = exponential_loss(forest, pool);
  }

  const int num_stages = static_cast<int>(cfg.stages.size());
  for (int stage = 0; stage < num_stages; ++stage) {
    const int grow = cfg.stages[stage] - static_cast<int>(forest.trees.size());
    forest = train_realboost(pool, grow, std::move(forest), cfg, log, stage + 1);
    if (on_stage) on_stage(stage + 1, forest);

    // Hard-negative mining over every negative not yet pooled.
    struct Mined {
      double score;
      SampleKey key;
    };
    std::vector<Mined> mined;
    MiningRecord rec;
    rec.stage = stage + 1;
    std::map<std::size_t, std::vector<std::size_t>> by_image;
    for (const auto& key : negatives)
      if (!in_pool.contains(key)) by_image[key.first].push_back(key.second);
    for (const auto& [img, idxs] : by_image) {
      const auto& cands = source.candidates(img);
      const auto feats = source.features(img, idxs);
      for (std::size_t k = 0; k < idxs.size(); ++k) {
        const double s = score(forest, feats[k], cands[idxs[k]].proposal.score);
        ++rec.scored;
        if (s >= cfg.hard_negative_score_floor) mined.push_back({s, {img, idxs[k]}});
      }
    }
    std::ranges::stable_sort(mined, [](const Mined& a, const Mined& b) { return a.score > b.score; });
    if (mined.size() > cfg.negatives_per_stage_cap) mined.resize(cfg.negatives_per_stage_cap);

    std::vector<SampleKey> keys;
    for (const auto& m : mined) {
      keys.push_back(m.key);
      in_pool.insert(m.key);
      rec.mined_scores.push_back(m.score);
    }
    std::ranges::sort(keys);
    append_samples(source, keys, pool);
    rec.pool_negatives = in_pool.size();
    if (log) log->mining.push_back(std::move(rec));
  }

  const int final_grow = cfg.final_trees - static_cast<int>(forest.trees.size());
  if (final_grow > 0) {
    forest = train_realboost(pool, final_grow, std::move(forest), cfg, log, num_stages + 1);
    if (on_stage) on_stage(num_stages + 1, forest);
  }
  return forest;
}

}  // namespace hcd
