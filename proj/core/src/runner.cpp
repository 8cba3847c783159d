#include "hcd/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "hcd/error.hpp"
#include "hcd/filters.hpp"

namespace hcd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::mutex g_log_mutex;

void say(const RunOptions& opts, const std::string& msg) {
  if (!opts.log) return;
  std::lock_guard lock(g_log_mutex);
  opts.log(msg);
}

RescaledImage load_pipeline_image(const DatasetManifest& m, std::size_t entry) {
  const auto& e = m.entries.at(entry);
  return rescale_for_pipeline(load_image(m.resolve(e.image)), m.resize_shorter_edge);
}

bool inside(const BoundingBox& b, const Image& img) {
  return b.right() > 0.0 && b.bottom() > 0.0 && b.x < img.width() && b.y < img.height();
}

Provenance handcrafted_provenance(const RunConfig& cfg) {
  return cfg.bank == "hogluv" ? Provenance::HogLuv : Provenance::Filtered;
}

json channels_sidecar(const DatasetManifest& m, const RunConfig& cfg) {
  const json full = config_to_json(cfg);
  return {{"bank", cfg.bank},
          {"cell_pixel_size", cfg.cell_pixel_size},
          {"channels", full["channels"]},
          {"resize_shorter_edge", m.resize_shorter_edge},
          {"channel_hash", hash_to_hex(channel_config_hash(cfg))}};
}

void check_sidecar(const fs::path& bank_dir, const DatasetManifest& m, const RunConfig& cfg) {
  const auto path = bank_dir / "channels.json";
  if (!fs::exists(path)) throw DataError("no channels.json in " + bank_dir.string());
  const auto bytes = read_file(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
  if (j != channels_sidecar(m, cfg))
    throw ConfigError("channels in " + bank_dir.string() +
                      " were computed with a different channel configuration or image size");
}

}  // namespace

int default_jobs() {
  const char* env = std::getenv("HCD_JOBS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024) throw ConfigError("HCD_JOBS must be a positive integer");
  return static_cast<int>(v);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mutex);
          if (!first) first = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

PreparedImage prepare_image(const DatasetManifest& manifest, std::size_t entry, const RunConfig& cfg,
                            std::size_t topk) {
  const auto& e = manifest.entries.at(entry);
  PreparedImage p;
  p.entry = entry;
  p.image_id = e.image_id;
  auto rs = load_pipeline_image(manifest, entry);
  p.image = std::move(rs.image);
  p.box_scale = manifest.coordinate_frame == CoordinateFrame::Original ? rs.scale : 1.0;

  std::vector<Proposal> props;
  for (auto& q : load_proposals(manifest.resolve(e.proposals), e.image_id)) {
    q.box = scale_box(q.box, p.box_scale);
    if (inside(q.box, p.image)) props.push_back(std::move(q));
  }
  p.proposals = select_topk(nms(props, cfg.proposals.nms), topk);
  for (auto b : e.annotation.boxes) {
    b.box = scale_box(b.box, p.box_scale);
    b.height_px *= p.box_scale;
    p.boxes.push_back(b);
  }
  return p;
}

// ---- FeatureExtractor ------------------------------------------------------------

FeatureExtractor::FeatureExtractor(const DatasetManifest& manifest, const RunConfig& cfg, RunOptions opts)
    : manifest_(manifest), cfg_(cfg), opts_(std::move(opts)) {
  cfg_.validate();
  if (cfg_.use_handcrafted) {
    const std::size_t roi = static_cast<std::size_t>(cfg_.handcrafted_roi);
    dim_ += bank_output_channels(cfg_.bank) * roi * roi;
    if (!opts_.channels_dir.empty()) check_sidecar(opts_.channels_dir / cfg_.bank, manifest_, cfg_);
  }
  if (cfg_.use_cnn) {
    for (const auto& e : manifest_.entries)
      if (!e.cnn_tensor) throw DataError("use_cnn is set but entry '" + e.image_id + "' has no cnn_tensor");
    if (!manifest_.entries.empty()) {
      const auto first = load_cnn_stack(manifest_.resolve(*manifest_.entries.front().cnn_tensor), cfg_.cnn_layer);
      cnn_channels_ = first.num_channels();
    }
    const std::size_t roi = static_cast<std::size_t>(cfg_.cnn_roi);
    dim_ += cnn_channels_ * roi * roi;
  }
}

ChannelStack FeatureExtractor::handcrafted(const PreparedImage& img) const {
  const int shrink = cfg_.channels.shrink;
  if (!opts_.channels_dir.empty()) {
    const auto path = channel_tensor_path(opts_.channels_dir, cfg_, img.image_id);
    if (fs::exists(path)) {
      auto s = load_tensor(path, handcrafted_provenance(cfg_), cfg_.bank);
      if (s.width() != img.image.width() / shrink || s.height() != img.image.height() / shrink)
        throw DataError(path.string() + ": channel tensor is " + std::to_string(s.width()) + "x" +
                        std::to_string(s.height()) + ", expected " + std::to_string(img.image.width() / shrink) +
                        "x" + std::to_string(img.image.height() / shrink));
      return s;
    }
  }
  if (cfg_.bank == "hogluv") return compute_hogluv(img.image, cfg_.channels);
  return apply_bank(compute_hogluv(img.image, cfg_.channels), configured_bank(cfg_));
}

ChannelStack FeatureExtractor::cnn(const PreparedImage& img) const {
  const auto& e = manifest_.entries.at(img.entry);
  const auto path = manifest_.resolve(*e.cnn_tensor);
  auto s = load_cnn_stack(path, cfg_.cnn_layer);
  if (s.num_channels() != cnn_channels_)
    throw DataError(path.string() + ": " + std::to_string(s.num_channels()) + " CNN channels, expected " +
                    std::to_string(cnn_channels_));
  // The map must cover the resized image at its downsample factor.
  const double f = s.downsample_factor();
  if (std::fabs(s.width() - img.image.width() / f) >= 1.0 || std::fabs(s.height() - img.image.height() / f) >= 1.0)
    throw DataError(path.string() + ": CNN map " + std::to_string(s.width()) + "x" + std::to_string(s.height()) +
                    " at factor " + std::to_string(s.downsample_factor()) + " does not match the resized image " +
                    std::to_string(img.image.width()) + "x" + std::to_string(img.image.height()));
  return s;
}

ImageStacks FeatureExtractor::stacks(const PreparedImage& img) const {
  ImageStacks out;
  if (cfg_.use_handcrafted) out.handcrafted = handcrafted(img);
  if (cfg_.use_cnn) out.cnn = cnn(img);
  return out;
}

FeatureVector FeatureExtractor::extract(const ImageStacks& stacks, const BoundingBox& box) const {
  std::vector<FeatureVector> parts;
  if (stacks.handcrafted) parts.push_back(roi_pool(*stacks.handcrafted, box, cfg_.handcrafted_roi, cfg_.handcrafted_roi));
  if (stacks.cnn) {
    auto fv = roi_pool(*stacks.cnn, box, cfg_.cnn_roi, cfg_.cnn_roi);
    if (cfg_.l2_normalize_cnn) l2_normalize_parts(fv);
    parts.push_back(std::move(fv));
  }
  auto out = concat_features(parts);
  if (out.size() != dim_)
    throw DataError("extracted " + std::to_string(out.size()) + " features, expected " + std::to_string(dim_));
  return out;
}

// ---- ManifestTrainingSource ------------------------------------------------------

ManifestTrainingSource::ManifestTrainingSource(const DatasetManifest& manifest, const RunConfig& cfg,
                                               RunOptions opts)
    : manifest_(manifest), cfg_(cfg), opts_(std::move(opts)), extractor_(manifest, cfg, opts_) {
  const std::size_t n = manifest_.entries.size();
  images_.resize(n);
  candidates_.resize(n);
  cache_.resize(n);
  parallel_for(n, opts_.jobs, [&](std::size_t i) {
    auto p = prepare_image(manifest_, i, cfg_, cfg_.proposals.train_topk);
    std::vector<BoundingBox> targets, ignore;
    for (const auto& b : p.boxes) (b.ignore ? ignore : targets).push_back(b.box);
    const auto labels = label_proposals(p.proposals, targets, cfg_.labels.pos_iou, cfg_.labels.neg_iou);
    auto& cands = candidates_[i];
    for (std::size_t k = 0; k < p.proposals.size(); ++k) {
      int label = labels[k];
      if (label < 0)
        for (const auto& r : ignore)
          if (ioa(p.proposals[k].box, r) >= cfg_.labels.ignore_ioa) label = 0;
      cands.push_back({p.proposals[k], label});
    }
    if (cfg_.labels.inject_gt)
      for (const auto& t : targets) {
        if (!inside(t, p.image)) continue;
        // A ground-truth box borrows the best score of the proposals covering it.
        double s = -1.0;
        for (const auto& q : p.proposals)
          if (iou(q.box, t) >= cfg_.labels.pos_iou) s = std::max(s, q.score);
        cands.push_back({{t, s < 0.0 ? 0.5 : s, p.image_id}, +1});
      }
    p.image = Image{};
    images_[i] = std::move(p);
  });
}

std::size_t ManifestTrainingSource::num_positives() const {
  std::size_t n = 0;
  for (const auto& cs : candidates_)
    for (const auto& c : cs) n += c.label > 0;
  return n;
}

std::size_t ManifestTrainingSource::num_negatives() const {
  std::size_t n = 0;
  for (const auto& cs : candidates_)
    for (const auto& c : cs) n += c.label < 0;
  return n;
}

std::vector<FeatureVector> ManifestTrainingSource::features(std::size_t image, std::span<const std::size_t> which) {
  auto& cache = cache_.at(image);
  std::vector<FeatureVector> out(which.size());
  std::vector<std::size_t> missing;
  for (std::size_t k = 0; k < which.size(); ++k) {
    const auto it = cache.find(which[k]);
    if (it != cache.end())
      out[k] = it->second;
    else
      missing.push_back(k);
  }
  if (missing.empty()) return out;

  PreparedImage p = images_[image];
  p.image = load_pipeline_image(manifest_, image).image;
  const auto stacks = extractor_.stacks(p);
  const auto& cands = candidates_[image];
  parallel_for(missing.size(), opts_.jobs, [&](std::size_t m) {
    const std::size_t k = missing[m];
    out[k] = extractor_.extract(stacks, cands.at(which[k]).proposal.box);
  });
  for (std::size_t k : missing) {
    const std::size_t bytes = out[k].values.size() * sizeof(float);
    if (cached_bytes_ + bytes > opts_.feature_cache_bytes) break;
    cache.emplace(which[k], out[k]);
    cached_bytes_ += bytes;
  }
  return out;
}

// ---- Commands ----------------------------------------------------------------------

fs::path channel_tensor_path(const fs::path& channels_dir, const RunConfig& cfg, const std::string& image_id) {
  return channels_dir / cfg.bank / (image_id + ".hcdt");
}

ChannelsReport compute_channels_for_manifest(const DatasetManifest& manifest, const RunConfig& cfg,
                                             const fs::path& out_dir, const RunOptions& opts) {
  cfg.validate();
  manifest.validate();
  const auto bank_dir = out_dir / cfg.bank;
  fs::create_directories(bank_dir);
  if (fs::exists(bank_dir / "channels.json"))
    check_sidecar(bank_dir, manifest, cfg);
  else
    write_text_atomic(bank_dir / "channels.json", channels_sidecar(manifest, cfg).dump(2) + "\n");

  ChannelsReport report;
  std::mutex mutex;
  parallel_for(manifest.entries.size(), opts.jobs, [&](std::size_t i) {
    const auto& id = manifest.entries[i].image_id;
    const auto path = channel_tensor_path(out_dir, cfg, id);
    if (fs::exists(path)) {
      std::lock_guard lock(mutex);
      ++report.skipped;
      return;
    }
    try {
      const auto img = load_pipeline_image(manifest, i).image;
      const auto stack = cfg.bank == "hogluv" ? compute_hogluv(img, cfg.channels)
                                              : apply_bank(compute_hogluv(img, cfg.channels), configured_bank(cfg));
      save_tensor(stack, path);
      std::lock_guard lock(mutex);
      ++report.written;
    } catch (const Error& e) {
      say(opts, id + ": " + e.what());
      std::lock_guard lock(mutex);
      report.failures.emplace_back(id, e.what());
    }
  });
  std::ranges::sort(report.failures);
  return report;
}

std::string with_hash_header(const std::string& csv, std::uint64_t config_hash) {
  return "# config_hash=" + hash_to_hex(config_hash) + "\n" + csv;
}

TrainResult train_detector(const DatasetManifest& manifest, const RunConfig& cfg, const fs::path& out_dir,
                           const RunOptions& opts) {
  cfg.validate();
  manifest.validate();
  if (manifest.entries.empty()) throw DataError("training manifest has no entries");
  const std::uint64_t hash = config_hash(cfg);

  ManifestTrainingSource source(manifest, cfg, opts);
  TrainResult r;
  r.positives = source.num_positives();
  r.negatives = source.num_negatives();
  say(opts, "training on " + std::to_string(manifest.entries.size()) + " images: " + std::to_string(r.positives) +
                " positives, " + std::to_string(r.negatives) + " negative candidates, " +
                std::to_string(source.feature_dim()) + " features");
  r.forest = bootstrap_train(source, cfg.train, &r.log, [&](int stage, const Forest& f) {
    say(opts, "stage " + std::to_string(stage) + ": " + std::to_string(f.trees.size()) + " trees");
  });
  r.forest.config_hash = hash;

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    save_forest(r.forest, out_dir / "forest.hcdf");
    json snap = config_to_json(cfg);
    snap["config_hash"] = hash_to_hex(hash);
    write_text_atomic(out_dir / "config.json", snap.dump(2) + "\n");
    write_text_atomic(out_dir / "train_log.csv", with_hash_header(r.log.rounds_csv(), hash));
    std::ostringstream mining;
    mining.precision(17);
    mining << "stage,scored,mined,pool_negatives,max_mined_score,min_mined_score\n";
    for (const auto& m : r.log.mining) {
      mining << m.stage << "," << m.scored << "," << m.mined_scores.size() << "," << m.pool_negatives << ",";
      if (!m.mined_scores.empty()) mining << m.mined_scores.front() << "," << m.mined_scores.back();
      else mining << ",";
      mining << "\n";
    }
    write_text_atomic(out_dir / "mining.csv", with_hash_header(mining.str(), hash));
  }
  return r;
}

std::vector<Proposal> detect(const DatasetManifest& manifest, const Forest* forest, const RunConfig& cfg,
                             const RunOptions& opts) {
  cfg.validate();
  manifest.validate();
  std::optional<FeatureExtractor> extractor;
  if (forest) {
    extractor.emplace(manifest, cfg, opts);
    if (forest->feature_dim != extractor->dim())
      throw DataError("feature dimension mismatch: forest expects " + std::to_string(forest->feature_dim) +
                      ", configuration yields " + std::to_string(extractor->dim()));
  }
  std::vector<std::vector<Proposal>> per_image(manifest.entries.size());
  parallel_for(manifest.entries.size(), opts.jobs, [&](std::size_t i) {
    const auto p = prepare_image(manifest, i, cfg, cfg.proposals.test_topk);
    std::vector<Proposal> scored = p.proposals;
    if (forest && !scored.empty()) {
      const auto stacks = extractor->stacks(p);
      for (auto& q : scored) q.score = score(*forest, extractor->extract(stacks, q.box), q.score);
    }
    if (cfg.proposals.detect_nms < 1.0)
      scored = nms(scored, cfg.proposals.detect_nms);
    else
      scored = select_topk(scored, scored.size());
    for (auto& q : scored) q.box = scale_box(q.box, 1.0 / p.box_scale);
    per_image[i] = std::move(scored);
  });
  std::vector<Proposal> out;
  for (auto& v : per_image) out.insert(out.end(), v.begin(), v.end());
  return out;
}

void save_detections(const std::vector<Proposal>& dets, std::uint64_t config_hash, const fs::path& path) {
  std::string text;
  const std::string hex = hash_to_hex(config_hash);
  for (const auto& d : dets) {
    auto line = proposal_to_json_line(d);
    // Splice the hash into the record.
    const auto close = line.rfind('}');
    line = line.substr(0, close) + ",\"config_hash\":\"" + hex + "\"}";
    text += line + "\n";
  }
  write_text_atomic(path, text);
}

DetectionFile load_detections(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  DetectionFile out;
  bool first = true;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const auto start = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.detections.push_back(proposal_from_json_line(line, start));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what(), e.offset());
    }
    const json j = json::parse(line);
    std::optional<std::uint64_t> h;
    if (j.contains("config_hash")) {
      if (!j["config_hash"].is_string()) throw ParseError(path.string() + ": config_hash must be a string", start);
      h = hash_from_hex(j["config_hash"].get<std::string>());
    }
    if (first) {
      out.config_hash = h;
      first = false;
    } else if (h != out.config_hash) {
      throw DataError(path.string() + ": detections carry different config hashes");
    }
  }
  return out;
}

std::vector<SubsetResult> evaluate(const DatasetManifest& manifest, const std::vector<Proposal>& dets,
                                   const EvalConfig& eval, int jobs) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) index.emplace(manifest.entries[i].image_id, i);
  std::vector<std::vector<Proposal>> per_image(manifest.entries.size());
  for (const auto& d : dets) {
    const auto it = index.find(d.image_id);
    if (it == index.end()) throw DataError("detection for unknown image_id '" + d.image_id + "'");
    per_image[it->second].push_back(d);
  }
  std::vector<SubsetResult> results;
  for (const auto& name : eval.subsets) {
    const auto filter = subset_by_name(name);
    std::vector<ImageMatch> matches(manifest.entries.size());
    parallel_for(matches.size(), jobs, [&](std::size_t i) {
      matches[i] = match_detections(per_image[i], manifest.entries[i].annotation.boxes, filter, eval.iou);
    });
    results.push_back({name, compute_mr(matches, manifest.entries.size())});
  }
  return results;
}

json eval_summary_json(const std::vector<SubsetResult>& results, std::uint64_t config_hash) {
  json subsets = json::array();
  for (const auto& r : results) {
    json points = json::array();
    for (const auto& p : r.curve.points) points.push_back({p.threshold, p.fppi, p.miss_rate});
    subsets.push_back({{"name", r.subset},
                       {"log_average_mr", r.curve.log_average_mr},
                       {"num_targets", r.curve.num_targets},
                       {"num_images", r.curve.num_images},
                       {"reference_fppi", r.curve.reference_fppi},
                       {"reference_mr", r.curve.reference_mr},
                       {"points", points}});
  }
  return {{"config_hash", hash_to_hex(config_hash)}, {"subsets", subsets}};
}

std::vector<SubsetResult> results_from_summary(const json& summary) {
  std::vector<SubsetResult> out;
  try {
    for (const auto& s : summary.at("subsets")) {
      SubsetResult r;
      r.subset = s.at("name").get<std::string>();
      r.curve.log_average_mr = s.at("log_average_mr").get<double>();
      r.curve.num_targets = s.at("num_targets").get<std::size_t>();
      r.curve.num_images = s.at("num_images").get<std::size_t>();
      r.curve.reference_fppi = s.at("reference_fppi").get<std::array<double, 9>>();
      r.curve.reference_mr = s.at("reference_mr").get<std::array<double, 9>>();
      for (const auto& p : s.at("points"))
        r.curve.points.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed evaluation summary: ") + e.what());
  }
  return out;
}

void write_eval_outputs(const std::vector<SubsetResult>& results, std::uint64_t config_hash,
                        const fs::path& out_dir) {
  if (results.empty()) throw ConfigError("no subsets to write");
  fs::create_directories(out_dir);
  write_text_atomic(out_dir / "summary.json", eval_summary_json(results, config_hash).dump(2) + "\n");
  write_text_atomic(out_dir / "curve.csv", with_hash_header(curve_csv(results.front().curve), config_hash));
  std::vector<std::pair<std::string, EvalCurve>> curves;
  for (const auto& r : results) {
    write_text_atomic(out_dir / ("curve_" + r.subset + ".csv"), with_hash_header(curve_csv(r.curve), config_hash));
    curves.emplace_back(r.subset, r.curve);
  }
  write_text_atomic(out_dir / "curve.svg", curve_svg(curves));
}

}  // namespace hcd
