#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hcd/pipeline_io.hpp"

namespace hcd {

// "image_id,x,y,w,h,score" rows; a header row starting with "image_id" is skipped.
std::vector<Proposal> parse_proposals_csv(const std::string& text, const std::string& source);

// Whitespace-separated "x y w h score" rows (or "x1 y1 x2 y2 score" when
// corners is set) for a single image; '#' starts a comment.
std::vector<Proposal> parse_proposals_txt(const std::string& text, const std::string& image_id, bool corners,
                                          const std::string& source);

// "image_id,x,y,w,h[,visible_fraction[,ignore]]" rows grouped per image in
// first-seen order; height_px is taken from h. A header row is skipped.
std::vector<Annotation> parse_annotations_csv(const std::string& text, const std::string& source);

struct ManifestBuildOptions {
  std::string images_dir = "images";        // relative to root
  std::string proposals_dir = "proposals";  // <image_id>.jsonl inside
  std::optional<std::string> cnn_dir;       // <image_id>.hcdt inside
  int resize_shorter_edge = 720;
  CoordinateFrame frame = CoordinateFrame::Original;
};

// One entry per annotation record. Each image is looked up as <id>.png then
// <id>.ppm; missing files raise DataError naming the path.
DatasetManifest build_manifest(const std::filesystem::path& root, const std::vector<Annotation>& annotations,
                               const ManifestBuildOptions& opts);

}  // namespace hcd
