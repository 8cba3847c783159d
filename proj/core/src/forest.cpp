#include "hcd/forest.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/math/tools/minima.hpp>

#include "hcd/error.hpp"

namespace hcd {

double Tree::evaluate(std::span<const float> x) const {
  std::int32_t n = 0;
  while (!nodes[n].is_leaf()) {
    const auto& node = nodes[n];
    n = x[node.feature] <= node.threshold ? node.left : node.right;
  }
  return nodes[n].value;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  int best = 0;
  std::vector<std::pair<std::int32_t, int>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [n, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (!nodes[n].is_leaf()) {
      stack.emplace_back(nodes[n].left, d + 1);
      stack.emplace_back(nodes[n].right, d + 1);
    }
  }
  return best;
}

Tree Tree::preordered() const {
  Tree out;
  out.nodes.reserve(nodes.size());
  std::function<std::int32_t(std::int32_t)> visit = [&](std::int32_t n) {
    const auto idx = static_cast<std::int32_t>(out.nodes.size());
    out.nodes.push_back(nodes[n]);
    if (!nodes[n].is_leaf()) {
      const auto l = visit(nodes[n].left);
      const auto r = visit(nodes[n].right);
      out.nodes[idx].left = l;
      out.nodes[idx].right = r;
    }
    return idx;
  };
  visit(0);
  return out;
}

std::string to_string(Stage0Transform t) {
  switch (t) {
    case Stage0Transform::None:
      return "none";
    case Stage0Transform::Logit:
      return "logit";
    case Stage0Transform::Linear:
      return "linear";
  }
  return "none";
}

Stage0Transform stage0_from_string(const std::string& s) {
  if (s == "none") return Stage0Transform::None;
  if (s == "logit") return Stage0Transform::Logit;
  if (s == "linear") return Stage0Transform::Linear;
  throw ConfigError("unknown stage-0 transform '" + s + "' (expected none, logit or linear)");
}

double stage0_transform_value(Stage0Transform t, double s) {
  switch (t) {
    case Stage0Transform::None:
      return 0.0;
    case Stage0Transform::Logit: {
      const double c = std::clamp(s, 1e-6, 1.0 - 1e-6);
      return std::log(c / (1.0 - c));
    }
    case Stage0Transform::Linear:
      return s;
  }
  return 0.0;
}

double Forest::stage0_term(double proposal_score) const {
  if (stage0_transform == Stage0Transform::None) return 0.0;
  return stage0_weight * stage0_transform_value(stage0_transform, proposal_score);
}

double Forest::score_raw(std::span<const float> x, double proposal_score) const {
  double f = stage0_term(proposal_score);
  for (const auto& t : trees) f += t.evaluate(x);
  return f;
}

double score(const Forest& forest, const FeatureVector& x, double proposal_score) {
  if (x.size() != forest.feature_dim)
    throw DataError("feature dimension mismatch: forest expects " +
                    std::to_string(forest.feature_dim) + ", got " + std::to_string(x.size()));
  return forest.score_raw(x.values, proposal_score);
}

void TrainConfig::validate() const {
  if (stages.empty()) throw ConfigError("training needs at least one stage");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i] < 1) throw ConfigError("stage tree counts must be positive");
    if (i > 0 && stages[i] <= stages[i - 1])
      throw ConfigError("stage tree totals must be strictly increasing");
  }
  if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
  if (!(leaf_smoothing > 0.0)) throw ConfigError("leaf_smoothing must be > 0");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0))
    throw ConfigError("feature_fraction must lie in (0,1]");
  if (initial_negatives < 1) throw ConfigError("initial_negatives must be >= 1");
}

void SampleSet::add(std::span<const float> x, int label, double proposal_score, double weight) {
  if (x.size() != dim_)
    throw DataError("sample has " + std::to_string(x.size()) + " features, expected " +
                    std::to_string(dim_));
  if (label != 1 && label != -1) throw DataError("sample label must be +1 or -1");
  if (!std::isfinite(weight) || weight < 0.0) throw DataError("sample weight must be finite and >= 0");
  for (float v : x)
    if (!std::isfinite(v)) throw DataError("rejected sample: non-finite feature value");
  x_.insert(x_.end(), x.begin(), x.end());
  labels_.push_back(label);
  scores_.push_back(proposal_score);
  weights_.push_back(weight);
}

std::string TrainLog::rounds_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "round,stage,train_loss,weighted_error\n";
  for (const auto& r : rounds)
    out << r.round << "," << r.stage << "," << r.loss_after << "," << r.weighted_error << "\n";
  return out.str();
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Per-feature sample order by (value, index), built on first use.
class SortedColumns {
 public:
  explicit SortedColumns(const SampleSet& s) : s_(s), order_(s.dim()), values_(s.dim()) {}

  void ensure(std::size_t d) {
    if (!order_[d].empty() || s_.size() == 0) return;
    auto& o = order_[d];
    o.resize(s_.size());
    std::iota(o.begin(), o.end(), 0u);
    std::ranges::sort(o, [&](std::uint32_t a, std::uint32_t b) {
      const float va = s_.value(a, d), vb = s_.value(b, d);
      return va < vb || (va == vb && a < b);
    });
    auto& v = values_[d];
    v.resize(o.size());
    for (std::size_t k = 0; k < o.size(); ++k) v[k] = s_.value(o[k], d);
  }
  const std::vector<std::uint32_t>& order(std::size_t d) const { return order_[d]; }
  const std::vector<float>& values(std::size_t d) const { return values_[d]; }

 private:
  const SampleSet& s_;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::vector<float>> values_;
};

double leaf_value(double wp, double wn, double eps) {
  return 0.5 * std::log((wp + eps) / (wn + eps));
}

struct NodeStats {
  double wp = 0.0, wn = 0.0;
  std::size_t count = 0;
};

struct BestSplit {
  double z = std::numeric_limits<double>::infinity();
  std::int32_t feature = -1;
  double threshold = 0.0;
};

std::vector<std::size_t> pick_features(std::size_t dim, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> all(dim);
  std::iota(all.begin(), all.end(), 0);
  if (fraction >= 1.0) return all;
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(dim * fraction)));
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, dim - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(k);
  std::ranges::sort(all);
  return all;
}

Tree fit_tree(const SampleSet& s, SortedColumns& cols, const std::vector<double>& w,
              const std::vector<std::size_t>& features, const TrainConfig& cfg) {
  const std::size_t n = s.size();
  Tree tree;
  tree.nodes.push_back({});
  std::vector<std::int32_t> node_of(n, 0);
  std::vector<NodeStats> stats(1);
  for (std::size_t i = 0; i < n; ++i) {
    (s.label(i) > 0 ? stats[0].wp : stats[0].wn) += w[i];
    ++stats[0].count;
  }

  std::vector<std::int32_t> frontier{0};
  for (int depth = 0; depth < cfg.max_depth && !frontier.empty(); ++depth) {
    // Slots for splittable nodes of this level.
    std::vector<std::int32_t> slot_of(tree.nodes.size(), -1);
    std::vector<std::int32_t> slot_node;
    for (auto nd : frontier) {
      const auto& st = stats[nd];
      if (st.wp > 0.0 && st.wn > 0.0 && st.count >= 2) {
        slot_of[nd] = static_cast<std::int32_t>(slot_node.size());
        slot_node.push_back(nd);
      }
    }
    if (slot_node.empty()) break;
    const std::size_t slots = slot_node.size();

    std::vector<BestSplit> best(slots);
    std::vector<double> acc_p(slots), acc_n(slots);
    std::vector<float> last(slots);
    std::vector<char> has_last(slots);
    for (std::size_t d : features) {
      cols.ensure(d);
      const auto& order = cols.order(d);
      const auto& vals = cols.values(d);
      std::fill(acc_p.begin(), acc_p.end(), 0.0);
      std::fill(acc_n.begin(), acc_n.end(), 0.0);
      std::fill(has_last.begin(), has_last.end(), 0);
      for (std::size_t k = 0; k < n; ++k) {
        const std::uint32_t i = order[k];
        const std::int32_t sl = slot_of[node_of[i]];
        if (sl < 0) continue;
        const float v = vals[k];
        if (has_last[sl] && v != last[sl]) {
          const auto& st = stats[slot_node[sl]];
          const double z = std::sqrt(acc_p[sl] * acc_n[sl]) +
                           std::sqrt(std::max(0.0, st.wp - acc_p[sl]) * std::max(0.0, st.wn - acc_n[sl]));
          if (z < best[sl].z) {
            best[sl].z = z;
            best[sl].feature = static_cast<std::int32_t>(d);
            best[sl].threshold = (static_cast<double>(last[sl]) + static_cast<double>(v)) / 2.0;
          }
        }
        (s.label(i) > 0 ? acc_p[sl] : acc_n[sl]) += w[i];
        last[sl] = v;
        has_last[sl] = 1;
      }
    }

    std::vector<std::int32_t> next;
    std::vector<std::int32_t> left_of(tree.nodes.size(), -1);
    for (std::size_t sl = 0; sl < slots; ++sl) {
      if (best[sl].feature < 0) continue;
      const auto nd = slot_node[sl];
      const auto l = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      stats.resize(tree.nodes.size());
      tree.nodes[nd].feature = best[sl].feature;
      tree.nodes[nd].threshold = best[sl].threshold;
      tree.nodes[nd].left = l;
      tree.nodes[nd].right = l + 1;
      left_of[nd] = l;
      next.push_back(l);
      next.push_back(l + 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto nd = node_of[i];
      if (nd >= static_cast<std::int32_t>(left_of.size()) || left_of[nd] < 0) continue;
      const auto& node = tree.nodes[nd];
      const auto child = s.value(i, node.feature) <= node.threshold ? node.left : node.right;
      node_of[i] = child;
      (s.label(i) > 0 ? stats[child].wp : stats[child].wn) += w[i];
      ++stats[child].count;
    }
    frontier = std::move(next);
  }

  for (std::size_t nd = 0; nd < tree.nodes.size(); ++nd)
    if (tree.nodes[nd].is_leaf())
      tree.nodes[nd].value = leaf_value(stats[nd].wp, stats[nd].wn, cfg.leaf_smoothing);
  return tree.preordered();
}

double loss_from_margins(const SampleSet& s, const std::vector<double>& f) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    num += s.weight(i) * std::exp(-s.label(i) * f[i]);
    den += s.weight(i);
  }
  return den > 0.0 ? num / den : 0.0;
}

void check_trainable(const SampleSet& s) {
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.weight(i) <= 0.0) continue;
    (s.label(i) > 0 ? pos : neg) = true;
  }
  if (!pos || !neg) throw DataError("training needs weighted samples of both labels");
}

}  // namespace

double exponential_loss(const Forest& forest, const SampleSet& samples) {
  std::vector<double> f(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    f[i] = forest.score_raw(samples.row(i), samples.proposal_score(i));
  return loss_from_margins(samples, f);
}

double fit_stage0(const SampleSet& s, Stage0Transform t) {
  if (t == Stage0Transform::None) return 0.0;
  std::vector<double> tv(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) tv[i] = stage0_transform_value(t, s.proposal_score(i));
  auto loss = [&](double a) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      num += s.weight(i) * std::exp(-s.label(i) * a * tv[i]);
      den += s.weight(i);
    }
    return num / den;
  };
  const auto [a, l] = boost::math::tools::brent_find_minima(loss, -20.0, 20.0, 40);
  // Never worse than ignoring the proposal score.
  return l <= loss(0.0) ? a : 0.0;
}

Forest train_realboost(const SampleSet& samples, int count, Forest forest, const TrainConfig& cfg,
                       TrainLog* log, int stage) {
  cfg.validate();
  if (count < 0) throw ConfigError("tree count must be >= 0");
  if (forest.feature_dim == 0) forest.feature_dim = samples.dim();
  if (forest.feature_dim != samples.dim())
    throw DataError("forest feature_dim " + std::to_string(forest.feature_dim) +
                    " does not match samples (" + std::to_string(samples.dim()) + ")");
  check_trainable(samples);

  const std::size_t n = samples.size();
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = forest.score_raw(samples.row(i), samples.proposal_score(i));

  SortedColumns cols(samples);
  std::vector<double> w(n);
  for (int t = 0; t < count; ++t) {
    // w_i ∝ prior_i · exp(−y_i F_i), shifted for range safety.
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) shift = std::max(shift, -samples.label(i) * f[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = samples.weight(i) * std::exp(-samples.label(i) * f[i] - shift);
      total += w[i];
    }
    if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("boosting weights degenerated");
    for (auto& wi : w) wi /= total;

    const std::size_t round = forest.trees.size();
    const auto features = pick_features(samples.dim(), cfg.feature_fraction,
                                        splitmix64(cfg.rng_seed ^ splitmix64(round)));
    Tree tree = fit_tree(samples, cols, w, features, cfg);

    TrainRound rec;
    rec.round = round;
    rec.stage = stage;
    rec.loss_before = loss_from_margins(samples, f);
    for (std::size_t i = 0; i < n; ++i) {
      const double h = tree.evaluate(samples.row(i));
      if (samples.label(i) * h < 0.0)
        rec.weighted_error += w[i];
      else if (h == 0.0)
        rec.weighted_error += 0.5 * w[i];
      f[i] += h;
    }
    rec.loss_after = loss_from_margins(samples, f);
    if (!std::isfinite(rec.loss_after)) throw NumericError("training loss is not finite");
    if (log) log->rounds.push_back(rec);
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

Forest train_realboost(std::span<const LabeledSample> samples, int count, Forest forest,
                       const TrainConfig& cfg, TrainLog* log) {
  if (samples.empty()) throw DataError("no training samples");
  SampleSet set(samples.front().features.size());
  for (const auto& s : samples) set.add(s);
  return train_realboost(set, count, std::move(forest), cfg, log);
}

std::vector<int> label_proposals(const std::vector<Proposal>& proposals,
                                 const std::vector<BoundingBox>& ground_truth, double pos_iou,
                                 double neg_iou) {
  if (!(0.0 <= neg_iou && neg_iou <= pos_iou && pos_iou <= 1.0))
    throw ConfigError("labeling thresholds must satisfy 0 <= neg_iou <= pos_iou <= 1");
  std::vector<int> labels;
  labels.reserve(proposals.size());
  for (const auto& p : proposals) {
    double best = 0.0;
    for (const auto& g : ground_truth) best = std::max(best, iou(p.box, g));
    labels.push_back(best >= pos_iou ? 1 : (best < neg_iou ? -1 : 0));
  }
  return labels;
}

}  // namespace hcd
