#include "toy_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hcd/channels.hpp"
#include "hcd/error.hpp"

namespace toy {

namespace {

using hcd::BoundingBox;
using hcd::Image;

struct Rgb {
  double r, g, b;
};

class Canvas {
 public:
  explicit Canvas(Image& img) : img_(img) {}

  void rect(double x0, double y0, double x1, double y1, Rgb c) {
    const int xa = std::max(0, static_cast<int>(std::floor(x0)));
    const int ya = std::max(0, static_cast<int>(std::floor(y0)));
    const int xb = std::min(img_.width(), static_cast<int>(std::ceil(x1)));
    const int yb = std::min(img_.height(), static_cast<int>(std::ceil(y1)));
    for (int y = ya; y < yb; ++y)
      for (int x = xa; x < xb; ++x) put(y, x, c);
  }

  void ellipse(double cx, double cy, double rx, double ry, Rgb c) {
    const int xa = std::max(0, static_cast<int>(std::floor(cx - rx)));
    const int ya = std::max(0, static_cast<int>(std::floor(cy - ry)));
    const int xb = std::min(img_.width(), static_cast<int>(std::ceil(cx + rx)));
    const int yb = std::min(img_.height(), static_cast<int>(std::ceil(cy + ry)));
    for (int y = ya; y < yb; ++y)
      for (int x = xa; x < xb; ++x) {
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        if (dx * dx + dy * dy <= 1.0) put(y, x, c);
      }
  }

 private:
  void put(int y, int x, Rgb c) {
    img_.at(0, y, x) = c.r;
    img_.at(1, y, x) = c.g;
    img_.at(2, y, x) = c.b;
  }
  Image& img_;
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }
  double normal(double sd) { return std::normal_distribution<double>(0.0, sd)(gen_); }
  Rgb color(double lo, double hi) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }

 private:
  std::mt19937_64 gen_;
};

constexpr double kAspect = 0.41;

void draw_background(Image& img, Rng& rng) {
  const int w = img.width(), h = img.height();
  const Rgb sky = rng.color(0.45, 0.75), ground = rng.color(0.25, 0.5);
  const double horizon = h * rng.uniform(0.35, 0.5);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Rgb& c = y < horizon ? sky : ground;
      const double shade = 0.08 * std::sin(0.05 * x + 0.03 * y);
      img.at(0, y, x) = c.r + shade;
      img.at(1, y, x) = c.g + shade;
      img.at(2, y, x) = c.b + shade;
    }
  Canvas cv(img);
  // Buildings and windows behind the scene.
  for (int k = rng.integer(2, 5); k > 0; --k) {
    const double bw = rng.uniform(25, 70), bh = rng.uniform(30, horizon + 10);
    const double bx = rng.uniform(-10, w - 20);
    const Rgb c = rng.color(0.3, 0.6);
    cv.rect(bx, horizon - bh, bx + bw, horizon + 2, c);
    for (double wy = horizon - bh + 6; wy < horizon - 8; wy += 10)
      for (double wx = bx + 4; wx < bx + bw - 6; wx += 9) cv.rect(wx, wy, wx + 4, wy + 5, rng.color(0.1, 0.3));
  }
}

void draw_pedestrian(Image& img, const BoundingBox& b, Rng& rng) {
  Canvas cv(img);
  const double cx = b.x + b.w / 2, h = b.h, w = b.w;
  const Rgb skin{rng.uniform(0.75, 0.95), rng.uniform(0.55, 0.7), rng.uniform(0.4, 0.55)};
  const Rgb shirt = rng.color(0.05, 0.95);
  const Rgb pants = rng.color(0.02, 0.3);
  // Legs with a stride.
  const double stride = rng.uniform(0.0, 0.12) * w;
  cv.rect(cx - 0.30 * w - stride, b.y + 0.55 * h, cx - 0.06 * w - stride / 2, b.y + h, pants);
  cv.rect(cx + 0.06 * w + stride / 2, b.y + 0.55 * h, cx + 0.30 * w + stride, b.y + h, pants);
  cv.rect(cx - 0.32 * w, b.y + 0.18 * h, cx + 0.32 * w, b.y + 0.58 * h, shirt);
  // Arms.
  cv.rect(cx - 0.46 * w, b.y + 0.2 * h, cx - 0.34 * w, b.y + 0.52 * h, shirt);
  cv.rect(cx + 0.34 * w, b.y + 0.2 * h, cx + 0.46 * w, b.y + 0.52 * h, shirt);
  cv.ellipse(cx, b.y + 0.1 * h, 0.2 * w, 0.09 * h, skin);
  cv.rect(cx - 0.2 * w, b.y + 0.01 * h, cx + 0.2 * w, b.y + 0.05 * h, rng.color(0.05, 0.3));
}

void draw_pole(Image& img, const BoundingBox& b, Rng& rng) {
  Canvas cv(img);
  const double cx = b.x + b.w / 2;
  const Rgb grey = rng.color(0.3, 0.6);
  cv.rect(cx - 0.07 * b.w, b.y + 0.15 * b.h, cx + 0.07 * b.w, b.y + b.h, grey);
  if (rng.chance(0.6))
    cv.rect(cx - 0.4 * b.w, b.y, cx + 0.4 * b.w, b.y + 0.22 * b.h, rng.color(0.1, 0.9));
  else
    cv.ellipse(cx, b.y + 0.12 * b.h, 0.45 * b.w, 0.12 * b.h, rng.color(0.1, 0.9));
}

void draw_clutter(Image& img, const BoundingBox& b, Rng& rng) {
  Canvas cv(img);
  // Bushes and bins: rounded blobs without limbs.
  const Rgb c = rng.color(0.05, 0.7);
  cv.ellipse(b.x + b.w / 2, b.y + b.h * 0.6, b.w * 0.55, b.h * 0.4, c);
  if (rng.chance(0.5)) cv.ellipse(b.x + b.w / 2, b.y + b.h * 0.3, b.w * 0.4, b.h * 0.3, rng.color(0.05, 0.7));
}

// Two legs under a board, sometimes with a lamp on top: a person without arms.
void draw_decoy(Image& img, const BoundingBox& b, Rng& rng) {
  Canvas cv(img);
  const double cx = b.x + b.w / 2, h = b.h, w = b.w;
  const Rgb legs = rng.color(0.02, 0.3);
  cv.rect(cx - 0.30 * w, b.y + 0.55 * h, cx - 0.08 * w, b.y + h, legs);
  cv.rect(cx + 0.08 * w, b.y + 0.55 * h, cx + 0.30 * w, b.y + h, legs);
  cv.rect(cx - 0.32 * w, b.y + 0.18 * h, cx + 0.32 * w, b.y + 0.58 * h, rng.color(0.05, 0.95));
  if (rng.chance(0.5))
    cv.ellipse(cx, b.y + 0.1 * h, 0.2 * w, 0.09 * h, rng.color(0.5, 0.95));
  else
    cv.rect(cx - 0.36 * w, b.y + 0.04 * h, cx + 0.36 * w, b.y + 0.2 * h, rng.color(0.05, 0.95));
}

void add_noise(Image& img, Rng& rng) {
  for (int c = 0; c < 3; ++c)
    for (auto& v : img.plane(c)) v = std::clamp(v + rng.normal(0.05), 0.0, 1.0);
}

BoundingBox jitter(const BoundingBox& b, Rng& rng, double shift, double scale) {
  const double s = 1.0 + rng.uniform(-scale, scale);
  const double nw = b.w * s, nh = b.h * s;
  return {b.x + b.w / 2 - nw / 2 + rng.uniform(-shift, shift) * b.w,
          b.y + b.h / 2 - nh / 2 + rng.uniform(-shift, shift) * b.h, nw, nh};
}

BoundingBox clip(const BoundingBox& b, int w, int h) {
  const double x0 = std::clamp(b.x, 0.0, double(w - 1)), y0 = std::clamp(b.y, 0.0, double(h - 1));
  const double x1 = std::clamp(b.right(), x0 + 1, double(w)), y1 = std::clamp(b.bottom(), y0 + 1, double(h));
  return {x0, y0, x1 - x0, y1 - y0};
}

bool overlaps_any(const BoundingBox& b, const std::vector<BoundingBox>& placed) {
  for (const auto& p : placed)
    if (hcd::iou(b, p) > 0.0 && hcd::intersection_area(b, p) > 0.15 * std::min(b.area(), p.area())) return true;
  return false;
}

// Places an upright box of the given height fully inside the image, avoiding
// earlier boxes; returns false when no slot is found.
bool place(double height, int w, int h, Rng& rng, std::vector<BoundingBox>& placed, BoundingBox& out) {
  const double bw = height * kAspect;
  for (int attempt = 0; attempt < 40; ++attempt) {
    const double foot = rng.uniform(std::min(h * 0.55 + height * 0.3, h - 1.0), h - 1.0);
    BoundingBox b{rng.uniform(1.0, w - bw - 1.0), foot - height, bw, height};
    if (b.y < 0) continue;
    if (overlaps_any(b, placed)) continue;
    placed.push_back(b);
    out = b;
    return true;
  }
  return false;
}

}  // namespace

Scene make_scene(const std::string& image_id, std::uint64_t seed, const Options& opt) {
  Rng rng(seed);
  Scene scene;
  scene.image = Image(opt.width, opt.height);
  scene.annotation.image_id = image_id;
  draw_background(scene.image, rng);

  const int w = opt.width, h = opt.height;
  std::vector<BoundingBox> placed;
  auto add_prop = [&](const BoundingBox& b, double s) {
    scene.proposals.push_back({clip(b, w, h), std::clamp(s, 0.001, 0.999), image_id});
  };

  // Distractors are placed first; later boxes never overlap them.
  BoundingBox b;
  for (int k = rng.integer(1, 3); k > 0; --k)
    if (place(rng.uniform(60, 110), w, h, rng, placed, b)) {
      draw_pole(scene.image, b, rng);
      add_prop(jitter(b, rng, 0.03, 0.05), rng.uniform(0.6, 0.99));
      add_prop(jitter(b, rng, 0.12, 0.12), rng.uniform(0.4, 0.9));
    }
  for (int k = rng.integer(1, 3); k > 0; --k)
    if (place(rng.uniform(55, 105), w, h, rng, placed, b)) {
      draw_decoy(scene.image, b, rng);
      add_prop(jitter(b, rng, 0.03, 0.05), rng.uniform(0.5, 0.99));
    }
  for (int k = rng.integer(1, 3); k > 0; --k)
    if (place(rng.uniform(45, 90), w, h, rng, placed, b)) {
      draw_clutter(scene.image, b, rng);
      add_prop(jitter(b, rng, 0.05, 0.08), rng.uniform(0.4, 0.95));
    }

  auto add_person = [&](double height, double visible, double score_lo, double score_hi) {
    if (!place(height, w, h, rng, placed, b)) return;
    draw_pedestrian(scene.image, b, rng);
    if (visible < 1.0) {
      // An occluder covering the lower body.
      const double top = b.y + b.h * visible;
      Canvas(scene.image).rect(b.x - 4, top, b.right() + 4, b.bottom() + 1, rng.color(0.2, 0.8));
    }
    scene.annotation.boxes.push_back({b, b.h, visible, false});
    const double s = rng.uniform(score_lo, score_hi);
    add_prop(jitter(b, rng, 0.02, 0.03), s);
    for (int j = 0; j < 3; ++j) add_prop(jitter(b, rng, 0.1, 0.12), s - rng.uniform(0.0, 0.2));
    // Off-centre box over part of the person.
    BoundingBox part = b;
    part.x += (rng.chance(0.5) ? 1 : -1) * rng.uniform(0.55, 0.8) * b.w;
    part.y += rng.uniform(-0.3, 0.3) * b.h;
    add_prop(part, rng.uniform(0.2, 0.7));
  };

  for (int k = rng.integer(1, 4); k > 0; --k) add_person(rng.uniform(55, 110), 1.0, 0.5, 0.95);
  if (rng.chance(0.4)) add_person(rng.uniform(28, 45), 1.0, 0.3, 0.7);
  if (rng.chance(0.3)) add_person(rng.uniform(60, 100), rng.uniform(0.35, 0.6), 0.3, 0.8);

  // Background proposals.
  for (int k = 0; k < 40; ++k) {
    const double ph = rng.uniform(25, 120);
    add_prop({rng.uniform(0, w - ph * kAspect), rng.uniform(0, h - ph), ph * kAspect, ph}, rng.uniform(0.01, 0.5));
  }

  add_noise(scene.image, rng);
  return scene;
}

hcd::ChannelStack cnn_stand_in(const Image& resized, int factor, const std::string& layer) {
  const auto hog = hcd::compute_hogluv(resized);
  const int w = hog.width(), h = hog.height();
  hcd::ChannelStack blurred(w, h, hcd::Provenance::Cnn, layer);
  constexpr int kChannels = 8, kRadius = 2;
  for (int c = 0; c < kChannels; ++c) blurred.add_channel(layer + "_" + std::to_string(c));
  for (int c = 0; c < kChannels; ++c) {
    auto dst = blurred.plane(c);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0;
        int n = 0;
        for (int dy = -kRadius; dy <= kRadius; ++dy)
          for (int dx = -kRadius; dx <= kRadius; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            s += hog.at(c, yy, xx);
            ++n;
          }
        dst[static_cast<std::size_t>(y) * w + x] = s / n;
      }
  }
  return hcd::shrink_stack(blurred, factor);
}

Paths generate(const std::filesystem::path& dir, const Options& opt) {
  namespace fs = std::filesystem;
  if (opt.train_images < 1 || opt.test_images < 1) throw hcd::ConfigError("toy dataset needs images in both splits");
  Paths paths;
  std::uint64_t image_seed = opt.seed;
  for (const std::string split : {"train", "test"}) {
    const int count = split == "train" ? opt.train_images : opt.test_images;
    const fs::path root = dir / split;
    fs::create_directories(root / "images");
    fs::create_directories(root / "proposals");
    if (opt.cnn) fs::create_directories(root / "cnn");

    hcd::DatasetManifest m;
    m.root = root;
    m.resize_shorter_edge = opt.resize_shorter_edge;
    m.coordinate_frame = hcd::CoordinateFrame::Original;
    for (int i = 0; i < count; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s_%03d", split.c_str(), i);
      const auto scene = make_scene(id, ++image_seed * 0x9E3779B97F4A7C15ull, opt);
      hcd::ManifestEntry e;
      e.image_id = id;
      e.image = "images/" + e.image_id + ".png";
      e.proposals = "proposals/" + e.image_id + ".jsonl";
      e.annotation = scene.annotation;
      hcd::save_png(scene.image, root / e.image);
      hcd::save_proposals(scene.proposals, root / e.proposals);
      if (opt.cnn) {
        // Derived from the decoded PNG so it matches what the pipeline sees.
        const auto decoded = hcd::load_image(root / e.image);
        const auto resized = hcd::rescale_for_pipeline(decoded, opt.resize_shorter_edge);
        e.cnn_tensor = "cnn/" + e.image_id + ".hcdt";
        hcd::save_tensor(cnn_stand_in(resized.image, opt.cnn_factor, "conv3"), root / *e.cnn_tensor);
      }
      m.entries.push_back(std::move(e));
    }
    const auto manifest = root / "manifest.json";
    hcd::save_manifest(m, manifest);
    (split == "train" ? paths.train_manifest : paths.test_manifest) = manifest;
  }
  return paths;
}

}  // namespace toy
