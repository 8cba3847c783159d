#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hcd/channels.hpp"
#include "hcd/geometry.hpp"
#include "hcd/image.hpp"

namespace hcd {

// ---- TensorFile -----------------------------------------------------------
//
// Little-endian layout:
//   char[4] magic "HCDT" | u32 version (1) | u32 dtype (1 = f32)
//   u32 channels | u32 height | u32 width
//   channels × { u32 byte_length | utf-8 name }
//   u32 downsample_factor
//   f32 payload[channels][height][width]

inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kTensorDtypeF32 = 1;

// Values are narrowed to f32 on write.
void save_tensor(const ChannelStack& stack, const std::filesystem::path& path);
std::vector<char> encode_tensor(const ChannelStack& stack);

ChannelStack decode_tensor(const std::vector<char>& bytes, Provenance provenance,
                           const std::string& source);
ChannelStack load_tensor(const std::filesystem::path& path, Provenance provenance,
                         const std::string& source);

// CNN feature maps; the layer name defaults to the file stem.
ChannelStack load_cnn_stack(const std::filesystem::path& path, std::string layer = {});

// ---- Proposals (JSON lines: {image_id, x, y, w, h, score}) -------------------

std::vector<Proposal> load_proposals(const std::filesystem::path& path);
// Only records whose image_id equals `image_id`.
std::vector<Proposal> load_proposals(const std::filesystem::path& path, const std::string& image_id);
void save_proposals(const std::vector<Proposal>& proposals, const std::filesystem::path& path);
std::string proposal_to_json_line(const Proposal& p);
Proposal proposal_from_json_line(const std::string& line, std::uint64_t offset);

// ---- Annotations ------------------------------------------------------------

struct AnnotatedBox {
  BoundingBox box;
  double height_px = 0.0;
  double visible_fraction = 1.0;
  bool ignore = false;

  friend bool operator==(const AnnotatedBox&, const AnnotatedBox&) = default;
};

struct Annotation {
  std::string image_id;
  std::vector<AnnotatedBox> boxes;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

// JSON lines: {image_id, boxes: [{x, y, w, h, height_px, visible_fraction, ignore}]}.
std::vector<Annotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::vector<Annotation>& anns, const std::filesystem::path& path);

// ---- Dataset manifest (JSON) ------------------------------------------------

enum class CoordinateFrame { Original, Resized };

struct ManifestEntry {
  std::string image_id;
  std::string image;  // relative to the manifest root
  Annotation annotation;
  std::string proposals;
  std::optional<std::string> cnn_tensor;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::filesystem::path root;
  int resize_shorter_edge = 720;
  // Frame of the annotation and proposal coordinates. CNN tensors are always
  // in resized-image coordinates.
  CoordinateFrame coordinate_frame = CoordinateFrame::Original;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
  void validate() const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline constexpr int kManifestSchemaVersion = 1;

DatasetManifest load_manifest(const std::filesystem::path& path);
// root is not serialized; load_manifest sets it to the file's directory.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// ---- Proposal handling --------------------------------------------------------

// Greedy NMS in (score desc, input order) order; a proposal is dropped when its
// IoU with an already kept one exceeds iou_threshold. Output is in keep order.
std::vector<Proposal> nms(const std::vector<Proposal>& proposals, double iou_threshold);

// Stable descending-score sort, truncated to k.
std::vector<Proposal> select_topk(const std::vector<Proposal>& proposals, std::size_t k);

struct RescaledImage {
  Image image;
  double scale = 1.0;  // resized = original × scale
};

// Bilinear resize so the shorter edge equals target_shorter_edge.
RescaledImage rescale_for_pipeline(const Image& img, int target_shorter_edge);

// ---- Small binary helpers -----------------------------------------------------

std::vector<char> read_file(const std::filesystem::path& path);
// Writes via a temporary file and rename so partially written files never appear.
void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace hcd
