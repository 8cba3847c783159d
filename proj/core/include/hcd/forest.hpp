#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hcd/geometry.hpp"
#include "hcd/roi.hpp"

namespace hcd {

// Tree node in a flat array; feature < 0 marks a leaf.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;  // x[feature] <= threshold goes left
  double value = 0.0;      // leaf confidence
  std::int32_t left = -1;
  std::int32_t right = -1;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double evaluate(std::span<const float> x) const;
  int depth() const;  // edges on the longest root-to-leaf path
  // Same tree with nodes renumbered in pre-order (the serialized order).
  Tree preordered() const;
  static Tree leaf(double value) { return Tree{{TreeNode{-1, 0.0, value, -1, -1}}}; }

  friend bool operator==(const Tree&, const Tree&) = default;
};

enum class Stage0Transform : std::uint8_t { None = 0, Logit = 1, Linear = 2 };

std::string to_string(Stage0Transform t);
Stage0Transform stage0_from_string(const std::string& s);

// Additive classifier F(x) = a·T(s) + Σ_t tree_t(x).
struct Forest {
  std::vector<Tree> trees;
  double stage0_weight = 0.0;
  Stage0Transform stage0_transform = Stage0Transform::Logit;
  std::size_t feature_dim = 0;
  std::uint64_t config_hash = 0;

  double stage0_term(double proposal_score) const;
  // Unchecked fast path; x.size() must equal feature_dim.
  double score_raw(std::span<const float> x, double proposal_score) const;

  friend bool operator==(const Forest&, const Forest&) = default;
};

// Logit clamps s into [1e-6, 1 - 1e-6].
double stage0_transform_value(Stage0Transform t, double s);

// Throws DataError on a dimension mismatch.
double score(const Forest& forest, const FeatureVector& x, double proposal_score);

struct TrainConfig {
  // Forest size after each bootstrapping stage.
  std::vector<int> stages{64, 128, 256, 512, 1024, 1536};
  // Growth after the last mining round; no growth when <= stages.back().
  int final_trees = 2048;
  int max_depth = 5;
  double leaf_smoothing = 1e-3;
  std::size_t initial_negatives = 5000;
  std::size_t negatives_per_stage_cap = 10000;
  std::uint64_t rng_seed = 0;
  double hard_negative_score_floor = 0.0;
  // Fraction of features searched per tree (1 = exhaustive).
  double feature_fraction = 1.0;
  Stage0Transform stage0 = Stage0Transform::Logit;

  void validate() const;
};

struct LabeledSample {
  FeatureVector features;
  int label = 1;  // +1 or -1
  double proposal_score = 0.5;
  double weight = 1.0;
};

// Dense row-major sample matrix used by the trainer.
class SampleSet {
 public:
  explicit SampleSet(std::size_t dim) : dim_(dim) {}

  void add(std::span<const float> x, int label, double proposal_score, double weight = 1.0);
  void add(const LabeledSample& s) {
    add(s.features.values, s.label, s.proposal_score, s.weight);
  }

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const float> row(std::size_t i) const { return {x_.data() + i * dim_, dim_}; }
  float value(std::size_t i, std::size_t d) const { return x_[i * dim_ + d]; }
  int label(std::size_t i) const { return labels_[i]; }
  double proposal_score(std::size_t i) const { return scores_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }

 private:
  std::size_t dim_;
  std::vector<float> x_;
  std::vector<int> labels_;
  std::vector<double> scores_;
  std::vector<double> weights_;
};

struct TrainRound {
  std::size_t round = 0;  // index of the tree in the forest
  int stage = 0;
  double loss_before = 0.0;
  double loss_after = 0.0;  // (Σ w_i e^{-y_i F}) / Σ w_i after adding the tree
  double weighted_error = 0.0;
};

struct MiningRecord {
  int stage = 0;
  std::size_t scored = 0;
  std::vector<double> mined_scores;  // pre-mining scores of the appended negatives
  std::size_t pool_negatives = 0;    // negatives in the pool after mining
};

struct TrainLog {
  std::vector<TrainRound> rounds;
  std::vector<MiningRecord> mining;
  double stage0_weight = 0.0;
  double stage0_loss = 0.0;

  std::string rounds_csv() const;
};

// Appends `count` RealBoost trees. Weights are w_i ∝ prior_i·exp(−y_i F(x_i));
// leaves hold ½·ln((W₊+ε)/(W₋+ε)); splits minimize Σ_children √(W₊W₋).
// Throws DataError on single-class input or non-finite features.
Forest train_realboost(const SampleSet& samples, int count, Forest forest, const TrainConfig& cfg,
                       TrainLog* log = nullptr, int stage = 0);
Forest train_realboost(std::span<const LabeledSample> samples, int count, Forest forest,
                       const TrainConfig& cfg, TrainLog* log = nullptr);

// Minimizes Σ w_i exp(−y_i·a·T(s_i)) over a; returns a.
double fit_stage0(const SampleSet& samples, Stage0Transform t);

// Normalized exponential loss of the forest on the samples.
double exponential_loss(const Forest& forest, const SampleSet& samples);

// ---- Proposal labeling --------------------------------------------------------

// +1 if max IoU >= pos_iou, −1 if < neg_iou, 0 otherwise.
std::vector<int> label_proposals(const std::vector<Proposal>& proposals,
                                 const std::vector<BoundingBox>& ground_truth,
                                 double pos_iou = 0.5, double neg_iou = 0.5);

// ---- Bootstrapped training -----------------------------------------------------

struct Candidate {
  Proposal proposal;
  int label = 0;  // +1, −1, or 0 (unused)
};

class TrainingSource {
 public:
  virtual ~TrainingSource() = default;
  virtual std::size_t num_images() const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual const std::vector<Candidate>& candidates(std::size_t image) = 0;
  virtual std::vector<FeatureVector> features(std::size_t image,
                                              std::span<const std::size_t> which) = 0;
};

using StageCallback = std::function<void(int stage, const Forest&)>;

// Stage k grows the forest to cfg.stages[k] trees on the current pool, then
// scores every unpooled negative and appends those scoring >= the floor
// (highest first, up to the cap). A final growth reaches cfg.final_trees.
Forest bootstrap_train(TrainingSource& source, const TrainConfig& cfg, TrainLog* log = nullptr,
                       const StageCallback& on_stage = {});

// ---- Serialization -------------------------------------------------------------
//
// Binary layout (little-endian):
//   char[4] "HCDF" | u32 version (1) | u32 feature_dim | u8 stage0_transform
//   f64 stage0_weight | u64 config_hash | u32 tree_count
//   per tree: u32 node_count, then pre-order records
//     u8 kind (0 leaf, 1 split); leaf: f64 value; split: u32 feature, f64 threshold

inline constexpr std::uint32_t kForestVersion = 1;

std::vector<char> encode_forest(const Forest& forest);
Forest decode_forest(const std::vector<char>& bytes);
void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

// Lossless JSON export for inspection.
std::string forest_to_json(const Forest& forest);
Forest forest_from_json(const std::string& text);

}  // namespace hcd
