#include "hcd/convert.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "hcd/error.hpp"

namespace hcd {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) {
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? std::string{} : field.substr(a, b - a + 1));
  }
  return out;
}

double number(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
    throw DataError(where + ": '" + s + "' is not a finite number");
  return v;
}

template <typename F>
void for_each_line(const std::string& text, F&& f) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    f(line, n);
  }
}

BoundingBox checked_box(double x, double y, double w, double h, const std::string& where) {
  BoundingBox b{x, y, w, h};
  if (!b.valid()) throw DataError(where + ": box must have positive width and height");
  return b;
}

}  // namespace

std::vector<Proposal> parse_proposals_csv(const std::string& text, const std::string& source) {
  std::vector<Proposal> out;
  for_each_line(text, [&](const std::string& line, std::size_t n) {
    const auto f = split(line, ',');
    if (n == 1 && !f.empty() && f[0] == "image_id") return;
    const std::string where = source + ":" + std::to_string(n);
    if (f.size() != 6) throw DataError(where + ": expected 6 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) throw DataError(where + ": empty image_id");
    out.push_back({checked_box(number(f[1], where), number(f[2], where), number(f[3], where), number(f[4], where), where),
                   number(f[5], where), f[0]});
  });
  return out;
}

std::vector<Proposal> parse_proposals_txt(const std::string& text, const std::string& image_id, bool corners,
                                          const std::string& source) {
  std::vector<Proposal> out;
  for_each_line(text, [&](const std::string& line, std::size_t n) {
    std::istringstream in(line);
    std::vector<std::string> f;
    for (std::string tok; in >> tok;) f.push_back(tok);
    const std::string where = source + ":" + std::to_string(n);
    if (f.size() != 5) throw DataError(where + ": expected 5 fields, got " + std::to_string(f.size()));
    double v[5];
    for (int i = 0; i < 5; ++i) v[i] = number(f[i], where);
    const BoundingBox b = corners ? checked_box(v[0], v[1], v[2] - v[0], v[3] - v[1], where)
                                  : checked_box(v[0], v[1], v[2], v[3], where);
    out.push_back({b, v[4], image_id});
  });
  return out;
}

std::vector<Annotation> parse_annotations_csv(const std::string& text, const std::string& source) {
  std::vector<Annotation> out;
  for_each_line(text, [&](const std::string& line, std::size_t n) {
    const auto f = split(line, ',');
    if (n == 1 && !f.empty() && f[0] == "image_id") return;
    const std::string where = source + ":" + std::to_string(n);
    if (f.size() < 5 || f.size() > 7) throw DataError(where + ": expected 5 to 7 fields");
    AnnotatedBox b;
    b.box = checked_box(number(f[1], where), number(f[2], where), number(f[3], where), number(f[4], where), where);
    b.height_px = b.box.h;
    if (f.size() > 5) b.visible_fraction = number(f[5], where);
    if (b.visible_fraction < 0.0 || b.visible_fraction > 1.0)
      throw DataError(where + ": visible_fraction must lie in [0,1]");
    if (f.size() > 6) {
      if (f[6] == "1" || f[6] == "true")
        b.ignore = true;
      else if (f[6] != "0" && f[6] != "false")
        throw DataError(where + ": ignore must be 0/1/true/false");
    }
    auto it = std::find_if(out.begin(), out.end(), [&](const Annotation& a) { return a.image_id == f[0]; });
    if (it == out.end()) it = out.insert(out.end(), Annotation{f[0], {}});
    it->boxes.push_back(b);
  });
  return out;
}

DatasetManifest build_manifest(const std::filesystem::path& root, const std::vector<Annotation>& annotations,
                               const ManifestBuildOptions& opts) {
  namespace fs = std::filesystem;
  DatasetManifest m;
  m.root = root;
  m.resize_shorter_edge = opts.resize_shorter_edge;
  m.coordinate_frame = opts.frame;
  for (const auto& a : annotations) {
    ManifestEntry e;
    e.image_id = a.image_id;
    e.annotation = a;
    for (const char* ext : {".png", ".ppm"}) {
      const std::string rel = opts.images_dir + "/" + a.image_id + ext;
      if (fs::exists(root / rel)) {
        e.image = rel;
        break;
      }
    }
    if (e.image.empty())
      throw DataError("no image for '" + a.image_id + "' under " + (root / opts.images_dir).string());
    e.proposals = opts.proposals_dir + "/" + a.image_id + ".jsonl";
    if (!fs::exists(root / e.proposals)) throw DataError("missing proposals file " + (root / e.proposals).string());
    if (opts.cnn_dir) {
      e.cnn_tensor = *opts.cnn_dir + "/" + a.image_id + ".hcdt";
      if (!fs::exists(root / *e.cnn_tensor)) throw DataError("missing CNN tensor " + (root / *e.cnn_tensor).string());
    }
    m.entries.push_back(std::move(e));
  }
  m.validate();
  return m;
}

}  // namespace hcd
