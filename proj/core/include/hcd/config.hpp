#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcd/channels.hpp"
#include "hcd/filters.hpp"
#include "hcd/forest.hpp"

namespace hcd {

struct ProposalConfig {
  double nms = 0.7;
  std::size_t train_topk = 1000;
  std::size_t test_topk = 100;
  // Suppression among scored detections; 1 disables it.
  double detect_nms = 0.5;
};

struct LabelConfig {
  double pos_iou = 0.5;
  double neg_iou = 0.5;
  bool inject_gt = true;
  // Negatives covering an ignore region by at least this IoA are not used.
  double ignore_ioa = 0.5;
};

struct EvalConfig {
  std::vector<std::string> subsets{"reasonable"};
  double iou = 0.5;
};

struct RunConfig {
  std::string preset;
  std::string bank = "rf9";  // hogluv | cb11 | rf9
  int handcrafted_roi = 20;  // 7 | 14 | 20 | 28
  int cnn_roi = 7;
  bool use_handcrafted = true;
  bool use_cnn = false;
  bool l2_normalize_cnn = false;
  std::string cnn_layer = "conv3";
  // 0 keeps the bank's own default.
  int cell_pixel_size = 0;
  ChannelConfig channels;
  ProposalConfig proposals;
  LabelConfig labels;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

// table1-hogluv, table1-cb11, table1-rf, table2-rf-conv3, table2-conv3.
RunConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

nlohmann::json config_to_json(const RunConfig& cfg);
// Keys absent from `j` keep the values of `base`; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, const RunConfig& base = {});
RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = {});

// "train.max_depth=3" style override; the value is parsed as JSON when possible.
RunConfig apply_override(const RunConfig& cfg, const std::string& assignment);

// FNV-1a 64 over the canonical JSON of every field that affects features,
// training or detection. Evaluation settings and the preset label are excluded.
std::uint64_t config_hash(const RunConfig& cfg);
// Hash of the fields that determine handcrafted channels only.
std::uint64_t channel_config_hash(const RunConfig& cfg);
std::uint64_t fnv1a64(std::string_view text);
std::string hash_to_hex(std::uint64_t h);
std::uint64_t hash_from_hex(const std::string& s);

// Bank used for handcrafted channels, honouring cell_pixel_size.
FilterBank configured_bank(const RunConfig& cfg);

}  // namespace hcd
