#pragma once

// Seeded generator for a small synthetic pedestrian dataset: stick-figure
// pedestrians among poles, armless decoys and clutter, an RPN-like proposal
// file per image, and an 8-channel coarse feature map standing in for CNN
// activations.

#include <cstdint>
#include <filesystem>

#include "hcd/image.hpp"
#include "hcd/pipeline_io.hpp"

namespace toy {

struct Options {
  int train_images = 20;
  int test_images = 10;
  int width = 320;  // original image size; the manifests upscale the shorter edge to 300
  int height = 240;
  int resize_shorter_edge = 300;
  std::uint64_t seed = 20240611;
  bool cnn = true;
  int cnn_factor = 4;
};

struct Scene {
  hcd::Image image;
  hcd::Annotation annotation;
  std::vector<hcd::Proposal> proposals;
};

Scene make_scene(const std::string& image_id, std::uint64_t seed, const Options& opt);

// Blurred, 4x-downsampled HOG+LUV subset of the resized image (8 channels).
hcd::ChannelStack cnn_stand_in(const hcd::Image& resized, int factor, const std::string& layer);

struct Paths {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

// Writes <dir>/{train,test}/manifest.json plus images, proposals and tensors.
// Deterministic for a given Options.
Paths generate(const std::filesystem::path& dir, const Options& opt = {});

}  // namespace toy
