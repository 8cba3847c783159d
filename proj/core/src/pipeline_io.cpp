#include "hcd/pipeline_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "hcd/binary.hpp"
#include "hcd/error.hpp"

namespace hcd {

using nlohmann::json;

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<char>(text.begin(), text.end()));
}

// ---- TensorFile -----------------------------------------------------------

std::vector<char> encode_tensor(const ChannelStack& stack) {
  binary::Writer w;
  w.bytes("HCDT", 4);
  w.u32(kTensorVersion);
  w.u32(kTensorDtypeF32);
  w.u32(static_cast<std::uint32_t>(stack.num_channels()));
  w.u32(static_cast<std::uint32_t>(stack.height()));
  w.u32(static_cast<std::uint32_t>(stack.width()));
  for (const auto& n : stack.names()) w.str(n);
  w.u32(static_cast<std::uint32_t>(stack.downsample_factor()));
  w.buffer().reserve(w.buffer().size() + stack.data().size() * 4);
  for (double v : stack.data()) w.f32(static_cast<float>(v));
  return std::move(w.buffer());
}

void save_tensor(const ChannelStack& stack, const std::filesystem::path& path) {
  stack.validate();
  write_file_atomic(path, encode_tensor(stack));
}

ChannelStack decode_tensor(const std::vector<char>& bytes, Provenance provenance,
                           const std::string& source) {
  binary::Reader r(bytes, "tensor file");
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::string(magic, 4) != "HCDT") throw ParseError("tensor file: bad magic", 0);
  const auto version = r.u32("version");
  if (version != kTensorVersion)
    throw ParseError("tensor file: unsupported version " + std::to_string(version), 4);
  const auto dtype = r.u32("dtype");
  if (dtype != kTensorDtypeF32)
    throw ParseError("tensor file: unsupported dtype " + std::to_string(dtype), 8);
  const auto c = r.u32("channels");
  const auto h = r.u32("height");
  const auto w = r.u32("width");
  if (c == 0 || h == 0 || w == 0) r.fail("zero-sized tensor dimension");
  std::vector<std::string> names;
  for (std::uint32_t i = 0; i < c; ++i) names.push_back(r.str("channel name"));
  const auto df = r.u32("downsample_factor");
  if (df == 0) r.fail("downsample_factor must be >= 1");

  const std::uint64_t expected = std::uint64_t(c) * h * w * 4;
  if (r.remaining() != expected)
    throw ParseError("tensor file: payload has " + std::to_string(r.remaining()) +
                         " bytes, expected " + std::to_string(expected),
                     r.offset());

  ChannelStack stack(static_cast<int>(w), static_cast<int>(h), provenance, source,
                     static_cast<int>(df));
  for (const auto& n : names) {
    auto p = stack.add_channel(n);
    for (auto& v : p) v = r.f32("payload");
  }
  stack.validate();
  return stack;
}

ChannelStack load_tensor(const std::filesystem::path& path, Provenance provenance,
                         const std::string& source) {
  try {
    return decode_tensor(read_file(path), provenance, source);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

ChannelStack load_cnn_stack(const std::filesystem::path& path, std::string layer) {
  if (layer.empty()) layer = path.stem().string();
  return load_tensor(path, Provenance::Cnn, layer);
}

// ---- Proposals ---------------------------------------------------------------

namespace {

double number_field(const json& j, const char* key, std::uint64_t offset) {
  if (!j.contains(key) || !j[key].is_number())
    throw ParseError(std::string("missing or non-numeric field '") + key + "'", offset);
  const double v = j[key].get<double>();
  if (!std::isfinite(v)) throw ParseError(std::string("non-finite field '") + key + "'", offset);
  return v;
}

std::string string_field(const json& j, const char* key, std::uint64_t offset) {
  if (!j.contains(key) || !j[key].is_string())
    throw ParseError(std::string("missing or non-string field '") + key + "'", offset);
  return j[key].get<std::string>();
}

json parse_json(const std::string& text, std::uint64_t offset) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), offset + e.byte);
  }
}

template <typename F>
void for_each_json_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const auto start = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(parse_json(line, start), start);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what(), e.offset());
    }
  }
}

BoundingBox box_from_json(const json& j, std::uint64_t offset) {
  BoundingBox b{number_field(j, "x", offset), number_field(j, "y", offset),
                number_field(j, "w", offset), number_field(j, "h", offset)};
  if (!b.valid()) throw ParseError("box must have positive width and height", offset);
  return b;
}

Proposal proposal_from_json(const json& j, std::uint64_t offset) {
  if (!j.is_object()) throw ParseError("proposal record must be a JSON object", offset);
  Proposal p;
  p.image_id = string_field(j, "image_id", offset);
  p.box = box_from_json(j, offset);
  p.score = number_field(j, "score", offset);
  return p;
}

json annotated_box_to_json(const AnnotatedBox& b) {
  return {{"x", b.box.x},
          {"y", b.box.y},
          {"w", b.box.w},
          {"h", b.box.h},
          {"height_px", b.height_px},
          {"visible_fraction", b.visible_fraction},
          {"ignore", b.ignore}};
}

AnnotatedBox annotated_box_from_json(const json& j, std::uint64_t offset) {
  if (!j.is_object()) throw ParseError("annotation box must be a JSON object", offset);
  AnnotatedBox b;
  b.box = box_from_json(j, offset);
  b.height_px = j.contains("height_px") ? number_field(j, "height_px", offset) : b.box.h;
  b.visible_fraction =
      j.contains("visible_fraction") ? number_field(j, "visible_fraction", offset) : 1.0;
  if (b.visible_fraction < 0.0 || b.visible_fraction > 1.0)
    throw ParseError("visible_fraction must lie in [0,1]", offset);
  if (j.contains("ignore")) {
    if (!j["ignore"].is_boolean()) throw ParseError("'ignore' must be a boolean", offset);
    b.ignore = j["ignore"].get<bool>();
  }
  return b;
}

json annotation_boxes_to_json(const Annotation& a) {
  json boxes = json::array();
  for (const auto& b : a.boxes) boxes.push_back(annotated_box_to_json(b));
  return boxes;
}

std::vector<AnnotatedBox> annotation_boxes_from_json(const json& j, std::uint64_t offset) {
  if (!j.is_array()) throw ParseError("'boxes' must be an array", offset);
  std::vector<AnnotatedBox> out;
  for (const auto& b : j) out.push_back(annotated_box_from_json(b, offset));
  return out;
}

}  // namespace

std::string proposal_to_json_line(const Proposal& p) {
  json j = {{"image_id", p.image_id}, {"x", p.box.x}, {"y", p.box.y},
            {"w", p.box.w},           {"h", p.box.h}, {"score", p.score}};
  return j.dump();
}

Proposal proposal_from_json_line(const std::string& line, std::uint64_t offset) {
  return proposal_from_json(parse_json(line, offset), offset);
}

std::vector<Proposal> load_proposals(const std::filesystem::path& path) {
  std::vector<Proposal> out;
  for_each_json_line(path, [&](const json& j, std::uint64_t off) {
    out.push_back(proposal_from_json(j, off));
  });
  return out;
}

std::vector<Proposal> load_proposals(const std::filesystem::path& path,
                                     const std::string& image_id) {
  auto all = load_proposals(path);
  std::erase_if(all, [&](const Proposal& p) { return p.image_id != image_id; });
  return all;
}

void save_proposals(const std::vector<Proposal>& proposals, const std::filesystem::path& path) {
  std::string text;
  for (const auto& p : proposals) text += proposal_to_json_line(p) + "\n";
  write_text_atomic(path, text);
}

// ---- Annotations ---------------------------------------------------------------

std::vector<Annotation> load_annotations(const std::filesystem::path& path) {
  std::vector<Annotation> out;
  std::unordered_set<std::string> ids;
  for_each_json_line(path, [&](const json& j, std::uint64_t off) {
    if (!j.is_object()) throw ParseError("annotation record must be a JSON object", off);
    Annotation a;
    a.image_id = string_field(j, "image_id", off);
    if (!ids.insert(a.image_id).second)
      throw ParseError("duplicate image_id '" + a.image_id + "'", off);
    if (!j.contains("boxes")) throw ParseError("missing field 'boxes'", off);
    a.boxes = annotation_boxes_from_json(j["boxes"], off);
    out.push_back(std::move(a));
  });
  return out;
}

void save_annotations(const std::vector<Annotation>& anns, const std::filesystem::path& path) {
  std::string text;
  for (const auto& a : anns) {
    json j = {{"image_id", a.image_id}, {"boxes", annotation_boxes_to_json(a)}};
    text += j.dump() + "\n";
  }
  write_text_atomic(path, text);
}

// ---- Manifest --------------------------------------------------------------------

void DatasetManifest::validate() const {
  if (resize_shorter_edge < 1) throw DataError("resize_shorter_edge must be >= 1");
  std::unordered_set<std::string> ids;
  for (const auto& e : entries) {
    if (e.image_id.empty()) throw DataError("manifest entry with empty image_id");
    if (!ids.insert(e.image_id).second)
      throw DataError("duplicate image_id '" + e.image_id + "' in manifest");
    if (e.annotation.image_id != e.image_id)
      throw DataError("annotation image_id mismatch for '" + e.image_id + "'");
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const json j = [&] {
    try {
      return parse_json(std::string(bytes.begin(), bytes.end()), 0);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.what(), e.offset());
    }
  }();
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError(path.string() + ": " + msg, 0);
  };
  if (!j.is_object()) throw fail("manifest must be a JSON object");
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != kManifestSchemaVersion)
    throw fail("unsupported or missing schema_version (expected " +
               std::to_string(kManifestSchemaVersion) + ")");

  DatasetManifest m;
  m.root = path.parent_path();
  if (j.contains("resize_shorter_edge")) {
    if (!j["resize_shorter_edge"].is_number_integer()) throw fail("resize_shorter_edge must be an integer");
    m.resize_shorter_edge = j["resize_shorter_edge"].get<int>();
  }
  const std::string frame = j.value("coordinate_frame", std::string("original"));
  if (frame == "original")
    m.coordinate_frame = CoordinateFrame::Original;
  else if (frame == "resized")
    m.coordinate_frame = CoordinateFrame::Resized;
  else
    throw fail("coordinate_frame must be 'original' or 'resized'");

  if (!j.contains("entries") || !j["entries"].is_array()) throw fail("missing 'entries' array");
  for (const auto& e : j["entries"]) {
    ManifestEntry me;
    try {
      me.image_id = string_field(e, "image_id", 0);
      me.image = string_field(e, "image", 0);
      me.proposals = string_field(e, "proposals", 0);
      if (e.contains("cnn_tensor") && !e["cnn_tensor"].is_null())
        me.cnn_tensor = string_field(e, "cnn_tensor", 0);
      me.annotation.image_id = me.image_id;
      if (e.contains("annotation")) {
        const auto& a = e["annotation"];
        if (!a.is_object() || !a.contains("boxes")) throw ParseError("annotation needs 'boxes'", 0);
        me.annotation.boxes = annotation_boxes_from_json(a["boxes"], 0);
      }
    } catch (const ParseError& err) {
      throw fail(std::string("entry '") + me.image_id + "': " + err.what());
    }
    m.entries.push_back(std::move(me));
  }
  try {
    m.validate();
  } catch (const DataError& err) {
    throw fail(err.what());
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  manifest.validate();
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json je = {{"image_id", e.image_id},
               {"image", e.image},
               {"proposals", e.proposals},
               {"annotation", {{"boxes", annotation_boxes_to_json(e.annotation)}}}};
    if (e.cnn_tensor) je["cnn_tensor"] = *e.cnn_tensor;
    entries.push_back(std::move(je));
  }
  json j = {{"schema_version", kManifestSchemaVersion},
            {"resize_shorter_edge", manifest.resize_shorter_edge},
            {"coordinate_frame",
             manifest.coordinate_frame == CoordinateFrame::Original ? "original" : "resized"},
            {"entries", std::move(entries)}};
  write_text_atomic(path, j.dump(2) + "\n");
}

// ---- Proposal handling -------------------------------------------------------

namespace {

std::vector<std::size_t> score_order(const std::vector<Proposal>& proposals) {
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), 0);
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) {
    return proposals[a].score > proposals[b].score;
  });
  return order;
}

}  // namespace

std::vector<Proposal> nms(const std::vector<Proposal>& proposals, double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0))
    throw ConfigError("NMS threshold must lie in [0,1]");
  std::vector<Proposal> kept;
  for (std::size_t i : score_order(proposals)) {
    const auto& p = proposals[i];
    const bool suppressed = std::ranges::any_of(
        kept, [&](const Proposal& k) { return iou(k.box, p.box) > iou_threshold; });
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

std::vector<Proposal> select_topk(const std::vector<Proposal>& proposals, std::size_t k) {
  if (k < 1) throw ConfigError("top-k needs k >= 1");
  std::vector<Proposal> out;
  const auto order = score_order(proposals);
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(proposals[order[i]]);
  return out;
}

RescaledImage rescale_for_pipeline(const Image& img, int target_shorter_edge) {
  if (target_shorter_edge < 1) throw ConfigError("target shorter edge must be >= 1");
  const int shorter = std::min(img.width(), img.height());
  const double scale = static_cast<double>(target_shorter_edge) / shorter;
  if (shorter == target_shorter_edge) return {img, 1.0};
  const int w = std::max(1, static_cast<int>(std::lround(img.width() * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(img.height() * scale)));
  return {resize_bilinear(img, w, h), scale};
}

}  // namespace hcd
