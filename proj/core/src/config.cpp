#include "hcd/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "hcd/error.hpp"

namespace hcd {

using nlohmann::json;

void RunConfig::validate() const {
  if (bank != "hogluv" && bank != "cb11" && bank != "rf9")
    throw ConfigError("bank must be hogluv, cb11 or rf9 (got '" + bank + "')");
  if (handcrafted_roi != 7 && handcrafted_roi != 14 && handcrafted_roi != 20 && handcrafted_roi != 28)
    throw ConfigError("handcrafted_roi must be one of 7, 14, 20, 28");
  if (cnn_roi < 1) throw ConfigError("cnn_roi must be >= 1");
  if (!use_handcrafted && !use_cnn) throw ConfigError("at least one of use_handcrafted/use_cnn must be set");
  if (cell_pixel_size < 0) throw ConfigError("cell_pixel_size must be >= 0");
  channels.validate();
  if (!(proposals.nms >= 0.0 && proposals.nms <= 1.0)) throw ConfigError("proposals.nms must lie in [0,1]");
  if (!(proposals.detect_nms >= 0.0 && proposals.detect_nms <= 1.0))
    throw ConfigError("proposals.detect_nms must lie in [0,1]");
  if (proposals.train_topk < 1 || proposals.test_topk < 1) throw ConfigError("top-k values must be >= 1");
  if (!(0.0 <= labels.neg_iou && labels.neg_iou <= labels.pos_iou && labels.pos_iou <= 1.0))
    throw ConfigError("labels must satisfy 0 <= neg_iou <= pos_iou <= 1");
  if (!(labels.ignore_ioa > 0.0 && labels.ignore_ioa <= 1.0)) throw ConfigError("labels.ignore_ioa must lie in (0,1]");
  train.validate();
  if (eval.subsets.empty()) throw ConfigError("eval.subsets must not be empty");
  if (!(eval.iou > 0.0 && eval.iou <= 1.0)) throw ConfigError("eval.iou must lie in (0,1]");
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "table1-hogluv") {
    c.bank = "hogluv";
  } else if (name == "table1-cb11") {
    c.bank = "cb11";
  } else if (name == "table1-rf") {
    c.bank = "rf9";
  } else if (name == "table2-rf-conv3") {
    c.bank = "rf9";
    c.use_cnn = true;
  } else if (name == "table2-conv3") {
    c.use_handcrafted = false;
    c.use_cnn = true;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

std::vector<std::string> preset_names() {
  return {"table1-hogluv", "table1-cb11", "table1-rf", "table2-rf-conv3", "table2-conv3"};
}

json config_to_json(const RunConfig& c) {
  const auto& t = c.train;
  return {
      {"preset", c.preset},
      {"bank", c.bank},
      {"handcrafted_roi", c.handcrafted_roi},
      {"cnn_roi", c.cnn_roi},
      {"use_handcrafted", c.use_handcrafted},
      {"use_cnn", c.use_cnn},
      {"l2_normalize_cnn", c.l2_normalize_cnn},
      {"cnn_layer", c.cnn_layer},
      {"cell_pixel_size", c.cell_pixel_size},
      {"channels",
       {{"smooth_radius", c.channels.smooth_radius},
        {"norm_epsilon", c.channels.norm_epsilon},
        {"num_orientations", c.channels.num_orientations},
        {"binning", c.channels.binning == Binning::Hard ? "hard" : "soft_linear"},
        {"shrink", c.channels.shrink}}},
      {"proposals",
       {{"nms", c.proposals.nms},
        {"train_topk", c.proposals.train_topk},
        {"test_topk", c.proposals.test_topk},
        {"detect_nms", c.proposals.detect_nms}}},
      {"labels",
       {{"pos_iou", c.labels.pos_iou},
        {"neg_iou", c.labels.neg_iou},
        {"inject_gt", c.labels.inject_gt},
        {"ignore_ioa", c.labels.ignore_ioa}}},
      {"train",
       {{"stages", t.stages},
        {"final_trees", t.final_trees},
        {"max_depth", t.max_depth},
        {"leaf_smoothing", t.leaf_smoothing},
        {"initial_negatives", t.initial_negatives},
        {"negatives_per_stage_cap", t.negatives_per_stage_cap},
        {"rng_seed", t.rng_seed},
        {"hard_negative_score_floor", t.hard_negative_score_floor},
        {"feature_fraction", t.feature_fraction},
        {"stage0", to_string(t.stage0)}}},
      {"eval", {{"subsets", c.eval.subsets}, {"iou", c.eval.iou}}},
  };
}

namespace {

void merge_strict(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config: '" + path + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + where + "'");
    if (base[key].is_object())
      merge_strict(base[key], value, where);
    else
      base[key] = value;
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + path + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig config_from_json(const json& patch, const RunConfig& base) {
  json j = config_to_json(base);
  merge_strict(j, patch, "");

  RunConfig c;
  c.preset = get<std::string>(j, "preset", "");
  c.bank = get<std::string>(j, "bank", "");
  c.handcrafted_roi = get<int>(j, "handcrafted_roi", "");
  c.cnn_roi = get<int>(j, "cnn_roi", "");
  c.use_handcrafted = get<bool>(j, "use_handcrafted", "");
  c.use_cnn = get<bool>(j, "use_cnn", "");
  c.l2_normalize_cnn = get<bool>(j, "l2_normalize_cnn", "");
  c.cnn_layer = get<std::string>(j, "cnn_layer", "");
  c.cell_pixel_size = get<int>(j, "cell_pixel_size", "");

  const auto& ch = j["channels"];
  c.channels.smooth_radius = get<int>(ch, "smooth_radius", "channels.");
  c.channels.norm_epsilon = get<double>(ch, "norm_epsilon", "channels.");
  c.channels.num_orientations = get<int>(ch, "num_orientations", "channels.");
  const auto binning = get<std::string>(ch, "binning", "channels.");
  if (binning == "hard")
    c.channels.binning = Binning::Hard;
  else if (binning == "soft_linear")
    c.channels.binning = Binning::SoftLinear;
  else
    throw ConfigError("config: channels.binning must be 'hard' or 'soft_linear'");
  c.channels.shrink = get<int>(ch, "shrink", "channels.");

  const auto& p = j["proposals"];
  c.proposals.nms = get<double>(p, "nms", "proposals.");
  c.proposals.train_topk = get<std::size_t>(p, "train_topk", "proposals.");
  c.proposals.test_topk = get<std::size_t>(p, "test_topk", "proposals.");
  c.proposals.detect_nms = get<double>(p, "detect_nms", "proposals.");

  const auto& l = j["labels"];
  c.labels.pos_iou = get<double>(l, "pos_iou", "labels.");
  c.labels.neg_iou = get<double>(l, "neg_iou", "labels.");
  c.labels.inject_gt = get<bool>(l, "inject_gt", "labels.");
  c.labels.ignore_ioa = get<double>(l, "ignore_ioa", "labels.");

  const auto& t = j["train"];
  c.train.stages = get<std::vector<int>>(t, "stages", "train.");
  c.train.final_trees = get<int>(t, "final_trees", "train.");
  c.train.max_depth = get<int>(t, "max_depth", "train.");
  c.train.leaf_smoothing = get<double>(t, "leaf_smoothing", "train.");
  c.train.initial_negatives = get<std::size_t>(t, "initial_negatives", "train.");
  c.train.negatives_per_stage_cap = get<std::size_t>(t, "negatives_per_stage_cap", "train.");
  c.train.rng_seed = get<std::uint64_t>(t, "rng_seed", "train.");
  c.train.hard_negative_score_floor = get<double>(t, "hard_negative_score_floor", "train.");
  c.train.feature_fraction = get<double>(t, "feature_fraction", "train.");
  c.train.stage0 = stage0_from_string(get<std::string>(t, "stage0", "train."));

  const auto& e = j["eval"];
  c.eval.subsets = get<std::vector<std::string>>(e, "subsets", "eval.");
  c.eval.iou = get<double>(e, "iou", "eval.");

  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  // Snapshots written next to a forest record their hash; it is derived, not a setting.
  if (j.is_object()) j.erase("config_hash");
  // A config file may name a preset to start from.
  RunConfig start = base;
  if (j.contains("preset") && j["preset"].is_string() && !j["preset"].get<std::string>().empty())
    start = preset_config(j["preset"].get<std::string>());
  return config_from_json(j, start);
}

RunConfig apply_override(const RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare strings
  }
  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  return config_from_json(patch, cfg);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("preset");
  j.erase("eval");
  return fnv1a64(j.dump());
}

std::uint64_t channel_config_hash(const RunConfig& cfg) {
  const json j = config_to_json(cfg);
  return fnv1a64(json{{"bank", j["bank"]}, {"cell_pixel_size", j["cell_pixel_size"]}, {"channels", j["channels"]}}.dump());
}

std::string hash_to_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t hash_from_hex(const std::string& s) {
  if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw DataError("malformed config hash '" + s + "'");
  return std::stoull(s, nullptr, 16);
}

FilterBank configured_bank(const RunConfig& cfg) {
  if (cfg.bank == "cb11") return cfg.cell_pixel_size > 0 ? build_cb11(cfg.cell_pixel_size) : build_cb11();
  if (cfg.bank == "rf9")
    return cfg.cell_pixel_size > 0 ? build_rotated_filters(cfg.cell_pixel_size) : build_rotated_filters();
  throw ConfigError("bank '" + cfg.bank + "' has no filters");
}

}  // namespace hcd
