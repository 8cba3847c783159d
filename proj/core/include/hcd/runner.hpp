#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcd/config.hpp"
#include "hcd/evaluation.hpp"
#include "hcd/forest.hpp"
#include "hcd/pipeline_io.hpp"
#include "hcd/roi.hpp"

namespace hcd {

using LogFn = std::function<void(const std::string&)>;

struct RunOptions {
  int jobs = 1;
  // Directory written by compute_channels_for_manifest; empty computes channels on the fly.
  std::filesystem::path channels_dir;
  // Upper bound on cached candidate features during training.
  std::size_t feature_cache_bytes = std::size_t{1} << 30;
  LogFn log;
};

// HCD_JOBS when set to a positive integer, else 1.
int default_jobs();

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is
// rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

// One manifest entry in the resized pipeline frame.
struct PreparedImage {
  std::size_t entry = 0;
  std::string image_id;
  Image image;  // resized
  // Multiply manifest-frame coordinates by this to reach the resized frame.
  double box_scale = 1.0;
  std::vector<Proposal> proposals;  // NMS then top-k, resized frame
  std::vector<AnnotatedBox> boxes;  // resized frame
};

PreparedImage prepare_image(const DatasetManifest& manifest, std::size_t entry, const RunConfig& cfg,
                            std::size_t topk);

struct ImageStacks {
  std::optional<ChannelStack> handcrafted;
  std::optional<ChannelStack> cnn;
};

// Handcrafted and CNN channels for one image and RoI features on top of them.
class FeatureExtractor {
 public:
  FeatureExtractor(const DatasetManifest& manifest, const RunConfig& cfg, RunOptions opts = {});

  std::size_t dim() const { return dim_; }
  std::size_t cnn_channels() const { return cnn_channels_; }

  ImageStacks stacks(const PreparedImage& img) const;
  FeatureVector extract(const ImageStacks& stacks, const BoundingBox& resized_box) const;

 private:
  ChannelStack handcrafted(const PreparedImage& img) const;
  ChannelStack cnn(const PreparedImage& img) const;

  const DatasetManifest& manifest_;
  RunConfig cfg_;
  RunOptions opts_;
  std::size_t dim_ = 0;
  std::size_t cnn_channels_ = 0;
};

// Training candidates of a manifest: proposals after NMS and top-k, labelled
// against the non-ignore ground truth, plus the ground-truth boxes themselves.
class ManifestTrainingSource : public TrainingSource {
 public:
  ManifestTrainingSource(const DatasetManifest& manifest, const RunConfig& cfg, RunOptions opts = {});

  std::size_t num_images() const override { return images_.size(); }
  std::size_t feature_dim() const override { return extractor_.dim(); }
  const std::vector<Candidate>& candidates(std::size_t image) override { return candidates_[image]; }
  std::vector<FeatureVector> features(std::size_t image, std::span<const std::size_t> which) override;

  std::size_t num_positives() const;
  std::size_t num_negatives() const;

 private:
  const DatasetManifest& manifest_;
  RunConfig cfg_;
  RunOptions opts_;
  FeatureExtractor extractor_;
  std::vector<PreparedImage> images_;
  std::vector<std::vector<Candidate>> candidates_;
  std::vector<std::map<std::size_t, FeatureVector>> cache_;
  std::size_t cached_bytes_ = 0;
};

// ---- Commands ------------------------------------------------------------------

struct ChannelsReport {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // (image_id, message)
};

// Writes <out_dir>/<bank>/<image_id>.hcdt for every entry plus a channels.json
// sidecar. Existing tensors are kept, so an interrupted run can be resumed.
ChannelsReport compute_channels_for_manifest(const DatasetManifest& manifest, const RunConfig& cfg,
                                             const std::filesystem::path& out_dir, const RunOptions& opts);

std::filesystem::path channel_tensor_path(const std::filesystem::path& channels_dir, const RunConfig& cfg,
                                          const std::string& image_id);

struct TrainResult {
  Forest forest;
  TrainLog log;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Bootstrapped training on the manifest. When out_dir is non-empty it receives
// forest.hcdf, config.json, train_log.csv and mining.csv.
TrainResult train_detector(const DatasetManifest& manifest, const RunConfig& cfg,
                           const std::filesystem::path& out_dir, const RunOptions& opts);

// Scores the top test_topk proposals per image, applies detect_nms and returns
// detections in the manifest frame, grouped by entry, descending score. A null
// forest scores by the proposal score alone.
std::vector<Proposal> detect(const DatasetManifest& manifest, const Forest* forest, const RunConfig& cfg,
                             const RunOptions& opts);

struct DetectionFile {
  std::vector<Proposal> detections;
  std::optional<std::uint64_t> config_hash;  // unset when the file carries none
};

// JSON lines with an extra "config_hash" field per record.
void save_detections(const std::vector<Proposal>& dets, std::uint64_t config_hash,
                     const std::filesystem::path& path);
// Throws DataError when records disagree on the hash.
DetectionFile load_detections(const std::filesystem::path& path);

struct SubsetResult {
  std::string subset;
  EvalCurve curve;
};

// Per-image matching against the manifest annotations for each configured subset.
std::vector<SubsetResult> evaluate(const DatasetManifest& manifest, const std::vector<Proposal>& dets,
                                   const EvalConfig& eval, int jobs = 1);

nlohmann::json eval_summary_json(const std::vector<SubsetResult>& results, std::uint64_t config_hash);
// Curves stored in a summary (points and MR only).
std::vector<SubsetResult> results_from_summary(const nlohmann::json& summary);

// Writes summary.json, curve.csv (first subset), curve_<subset>.csv and curve.svg.
void write_eval_outputs(const std::vector<SubsetResult>& results, std::uint64_t config_hash,
                        const std::filesystem::path& out_dir);

// CSV helpers shared by the artifacts: a "# config_hash=<hex>" first line.
std::string with_hash_header(const std::string& csv, std::uint64_t config_hash);

}  // namespace hcd
