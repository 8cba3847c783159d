#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hcd/config.hpp"
#include "hcd/convert.hpp"
#include "hcd/error.hpp"
#include "hcd/evaluation.hpp"
#include "hcd/forest.hpp"
#include "hcd/pipeline_io.hpp"
#include "hcd/runner.hpp"

namespace fs = std::filesystem;
using namespace hcd;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// --config / --preset / --set shared by the pipeline subcommands.
struct ConfigArgs {
  std::string config_file;
  std::string preset;
  std::vector<std::string> overrides;

  bool given() const { return !config_file.empty() || !preset.empty() || !overrides.empty(); }

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--preset", preset, "Start from a named preset")
        ->check(CLI::IsMember(preset_names()));
    cmd->add_option("--set", overrides, "Override a field, e.g. train.max_depth=3 (repeatable)");
  }

  RunConfig resolve(const std::optional<fs::path>& fallback = std::nullopt) const {
    RunConfig cfg = preset.empty() ? RunConfig{} : preset_config(preset);
    if (!config_file.empty())
      cfg = load_config(config_file, cfg);
    else if (preset.empty() && fallback && fs::exists(*fallback))
      cfg = load_config(*fallback, cfg);
    for (const auto& o : overrides) cfg = apply_override(cfg, o);
    cfg.validate();
    return cfg;
  }
};

RunOptions run_options(int jobs, const std::string& channels_dir) {
  RunOptions o;
  o.jobs = jobs;
  o.channels_dir = channels_dir;
  o.log = [](const std::string& msg) { std::cerr << msg << "\n"; };
  return o;
}

std::string text_of(const fs::path& p) {
  const auto bytes = read_file(p);
  return {bytes.begin(), bytes.end()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proposal-driven pedestrian detection with handcrafted and CNN channel features"};
  app.require_subcommand(1);
  int jobs = 0;
  app.add_option("-j,--jobs", jobs, "Worker threads (default: HCD_JOBS or 1)")->check(CLI::Range(1, 1024));

  // compute-channels
  auto* cc = app.add_subcommand("compute-channels", "Write handcrafted channel tensors for every image");
  ConfigArgs cc_cfg;
  std::string cc_manifest, cc_out;
  cc_cfg.attach(cc);
  cc->add_option("--manifest", cc_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  cc->add_option("--out", cc_out, "Output directory (tensors go to <out>/<bank>/)")->required();

  // train
  auto* tr = app.add_subcommand("train", "Bootstrapped boosted-forest training");
  ConfigArgs tr_cfg;
  std::string tr_manifest, tr_out, tr_channels;
  tr_cfg.attach(tr);
  tr->add_option("--manifest", tr_manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "Run directory for forest.hcdf, config.json and logs")->required();
  tr->add_option("--channels-dir", tr_channels, "Precomputed channels from compute-channels");

  // detect
  auto* de = app.add_subcommand("detect", "Score proposals and write detections");
  ConfigArgs de_cfg;
  std::string de_manifest, de_forest, de_out, de_channels;
  bool de_baseline = false, de_allow = false;
  de_cfg.attach(de);
  de->add_option("--manifest", de_manifest, "Test manifest")->required()->check(CLI::ExistingFile);
  auto* forest_opt = de->add_option("--forest", de_forest, "Trained forest (config.json beside it is used by default)")
                         ->check(CLI::ExistingFile);
  auto* base_opt = de->add_flag("--proposal-score-only", de_baseline, "Rank proposals by their own score");
  forest_opt->excludes(base_opt);
  de->add_option("--out", de_out, "Detections JSON-lines file")->required();
  de->add_option("--channels-dir", de_channels, "Precomputed channels from compute-channels");
  de->add_flag("--allow-hash-mismatch", de_allow, "Accept a forest trained under a different configuration");

  // eval
  auto* ev = app.add_subcommand("eval", "Log-average miss rate over FPPI [1e-2, 1]");
  ConfigArgs ev_cfg;
  std::string ev_dets, ev_manifest, ev_out;
  std::vector<std::string> ev_subsets;
  bool ev_allow = false;
  ev_cfg.attach(ev);
  ev->add_option("--detections", ev_dets, "Detections from detect")->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", ev_manifest, "Manifest with ground truth")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "Directory for summary.json, curve.csv and curve.svg")->required();
  ev->add_option("--subset", ev_subsets, "Subsets to report (default from config)")
      ->check(CLI::IsMember(subset_names()));
  ev->add_flag("--allow-hash-mismatch", ev_allow, "Evaluate detections from a different configuration");

  // convert
  auto* cv = app.add_subcommand("convert", "Import external proposals and annotations");
  cv->require_subcommand(1);
  auto* cvp = cv->add_subcommand("proposals", "CSV or per-image TXT proposals to JSON lines");
  std::string cvp_format = "csv", cvp_out, cvp_image_id;
  std::vector<std::string> cvp_in;
  bool cvp_corners = false;
  cvp->add_option("--format", cvp_format, "csv (image_id,x,y,w,h,score) or txt (x y w h score)")
      ->check(CLI::IsMember({"csv", "txt"}));
  cvp->add_option("--in", cvp_in, "Input files; txt files are named <image_id>.txt")->required()->check(CLI::ExistingFile);
  cvp->add_option("--image-id", cvp_image_id, "Image id for a single txt input");
  cvp->add_flag("--corners", cvp_corners, "txt rows are x1 y1 x2 y2 score");
  cvp->add_option("--out", cvp_out, "Output JSON lines (or directory with --split)")->required();
  bool cvp_split = false;
  cvp->add_flag("--split", cvp_split, "Write one <image_id>.jsonl per image into --out");

  auto* cva = cv->add_subcommand("annotations", "CSV annotations to JSON lines");
  std::string cva_in, cva_out;
  cva->add_option("--in", cva_in, "image_id,x,y,w,h[,visible_fraction[,ignore]]")->required()->check(CLI::ExistingFile);
  cva->add_option("--out", cva_out, "Output JSON lines")->required();

  auto* cvm = cv->add_subcommand("manifest", "Build a manifest from a dataset directory");
  std::string cvm_root, cvm_ann, cvm_out, cvm_frame = "original";
  ManifestBuildOptions cvm_opts;
  std::string cvm_cnn;
  cvm->add_option("--root", cvm_root, "Dataset root")->required()->check(CLI::ExistingDirectory);
  cvm->add_option("--annotations", cvm_ann, "Annotations JSON lines")->required()->check(CLI::ExistingFile);
  cvm->add_option("--images-dir", cvm_opts.images_dir, "Images directory under the root");
  cvm->add_option("--proposals-dir", cvm_opts.proposals_dir, "Per-image proposal files under the root");
  cvm->add_option("--cnn-dir", cvm_cnn, "Per-image CNN tensors under the root");
  cvm->add_option("--resize", cvm_opts.resize_shorter_edge, "Shorter edge after resizing")->check(CLI::PositiveNumber);
  cvm->add_option("--frame", cvm_frame, "Coordinate frame of boxes")->check(CLI::IsMember({"original", "resized"}));
  cvm->add_option("--out", cvm_out, "Manifest path (default <root>/manifest.json)");

  // plot
  auto* pl = app.add_subcommand("plot", "Miss-rate/FPPI plot of one or more evaluations");
  std::vector<std::string> pl_runs;
  std::string pl_subset = "reasonable", pl_out;
  pl->add_option("--run", pl_runs, "label=path/to/summary.json (repeatable)")->required();
  pl->add_option("--subset", pl_subset, "Subset to plot")->check(CLI::IsMember(subset_names()));
  pl->add_option("--out", pl_out, "Output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (jobs == 0) jobs = default_jobs();

    if (*cc) {
      const auto cfg = cc_cfg.resolve();
      if (!cfg.use_handcrafted) throw ConfigError("configuration has use_handcrafted=false");
      const auto m = load_manifest(cc_manifest);
      const auto rep = compute_channels_for_manifest(m, cfg, cc_out, run_options(jobs, {}));
      std::printf("%zu written, %zu skipped, %zu failed\n", rep.written, rep.skipped, rep.failures.size());
      return rep.failures.empty() ? 0 : kExitData;
    }

    if (*tr) {
      const auto cfg = tr_cfg.resolve();
      const auto m = load_manifest(tr_manifest);
      const auto r = train_detector(m, cfg, tr_out, run_options(jobs, tr_channels));
      std::printf("forest: %zu trees, %zu features, config %s -> %s\n", r.forest.trees.size(), r.forest.feature_dim,
                  hash_to_hex(r.forest.config_hash).c_str(), (fs::path(tr_out) / "forest.hcdf").c_str());
      return 0;
    }

    if (*de) {
      if (de_forest.empty() && !de_baseline) throw ConfigError("detect needs --forest or --proposal-score-only");
      std::optional<fs::path> snapshot;
      if (!de_forest.empty()) snapshot = fs::path(de_forest).parent_path() / "config.json";
      const auto cfg = de_cfg.resolve(snapshot);
      const auto hash = config_hash(cfg);
      const auto m = load_manifest(de_manifest);
      std::optional<Forest> forest;
      if (!de_forest.empty()) {
        forest = load_forest(de_forest);
        if (forest->config_hash != hash && !de_allow)
          throw ConfigError("forest was trained with config " + hash_to_hex(forest->config_hash) +
                            " but the current configuration hashes to " + hash_to_hex(hash) +
                            " (use --allow-hash-mismatch to proceed)");
      }
      const auto dets = detect(m, forest ? &*forest : nullptr, cfg, run_options(jobs, de_channels));
      if (const auto parent = fs::path(de_out).parent_path(); !parent.empty()) fs::create_directories(parent);
      save_detections(dets, hash, de_out);
      std::printf("%zu detections on %zu images -> %s\n", dets.size(), m.entries.size(), de_out.c_str());
      return 0;
    }

    if (*ev) {
      const auto file = load_detections(ev_dets);
      const auto m = load_manifest(ev_manifest);
      const RunConfig cfg = ev_cfg.resolve();
      std::uint64_t hash = config_hash(cfg);
      if (!file.config_hash) {
        if (!ev_allow) throw ConfigError(ev_dets + " carries no config hash (use --allow-hash-mismatch)");
      } else if (ev_cfg.given() && *file.config_hash != hash && !ev_allow) {
        throw ConfigError("detections were produced with config " + hash_to_hex(*file.config_hash) +
                          " but the given configuration hashes to " + hash_to_hex(hash) +
                          " (use --allow-hash-mismatch to proceed)");
      }
      if (file.config_hash) hash = *file.config_hash;
      EvalConfig eval = cfg.eval;
      if (!ev_subsets.empty()) eval.subsets = ev_subsets;
      const auto results = evaluate(m, file.detections, eval, jobs);
      write_eval_outputs(results, hash, ev_out);
      for (const auto& r : results)
        std::printf("%-10s MR %6.2f%%  (%zu targets, %zu images)\n", r.subset.c_str(), 100.0 * r.curve.log_average_mr,
                    r.curve.num_targets, r.curve.num_images);
      return 0;
    }

    if (*cvp) {
      std::vector<Proposal> all;
      for (const auto& in : cvp_in) {
        const fs::path p(in);
        if (cvp_format == "csv") {
          const auto v = parse_proposals_csv(text_of(p), in);
          all.insert(all.end(), v.begin(), v.end());
        } else {
          if (!cvp_image_id.empty() && cvp_in.size() > 1) throw ConfigError("--image-id needs a single input");
          const auto id = cvp_image_id.empty() ? p.stem().string() : cvp_image_id;
          const auto v = parse_proposals_txt(text_of(p), id, cvp_corners, in);
          all.insert(all.end(), v.begin(), v.end());
        }
      }
      if (cvp_split) {
        fs::create_directories(cvp_out);
        std::vector<std::string> ids;
        for (const auto& q : all)
          if (std::find(ids.begin(), ids.end(), q.image_id) == ids.end()) ids.push_back(q.image_id);
        for (const auto& id : ids) {
          std::vector<Proposal> mine;
          for (const auto& q : all)
            if (q.image_id == id) mine.push_back(q);
          save_proposals(mine, fs::path(cvp_out) / (id + ".jsonl"));
        }
      } else {
        save_proposals(all, cvp_out);
      }
      std::printf("%zu proposals written\n", all.size());
      return 0;
    }

    if (*cva) {
      const auto anns = parse_annotations_csv(text_of(cva_in), cva_in);
      save_annotations(anns, cva_out);
      std::printf("%zu annotated images written\n", anns.size());
      return 0;
    }

    if (*cvm) {
      if (!cvm_cnn.empty()) cvm_opts.cnn_dir = cvm_cnn;
      cvm_opts.frame = cvm_frame == "resized" ? CoordinateFrame::Resized : CoordinateFrame::Original;
      const auto m = build_manifest(cvm_root, load_annotations(cvm_ann), cvm_opts);
      const fs::path out = cvm_out.empty() ? fs::path(cvm_root) / "manifest.json" : fs::path(cvm_out);
      if (fs::absolute(out).parent_path() != fs::absolute(cvm_root))
        throw ConfigError("the manifest must be written into the dataset root (paths are relative to it)");
      save_manifest(m, out);
      std::printf("%zu entries -> %s\n", m.entries.size(), out.c_str());
      return 0;
    }

    if (*pl) {
      std::vector<std::pair<std::string, EvalCurve>> curves;
      for (const auto& run : pl_runs) {
        const auto eq = run.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--run expects label=summary.json, got " + run);
        const auto path = run.substr(eq + 1);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(text_of(path));
        } catch (const nlohmann::json::parse_error& e) {
          throw ParseError(path + ": " + e.what(), e.byte);
        }
        bool found = false;
        for (auto& r : results_from_summary(j))
          if (r.subset == pl_subset) {
            curves.emplace_back(run.substr(0, eq), std::move(r.curve));
            found = true;
          }
        if (!found) throw DataError(path + " has no '" + pl_subset + "' subset");
      }
      write_text_atomic(pl_out, curve_svg(curves));
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
