#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "hcd/error.hpp"
#include "toy_dataset.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic pedestrian dataset"};
  toy::Options opt;
  std::string out;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--train", opt.train_images, "Training images")->check(CLI::PositiveNumber);
  app.add_option("--test", opt.test_images, "Test images")->check(CLI::PositiveNumber);
  app.add_option("--seed", opt.seed, "Generator seed");
  bool no_cnn = false;
  app.add_flag("--no-cnn", no_cnn, "Skip the stand-in CNN tensors");
  CLI11_PARSE(app, argc, argv);
  opt.cnn = !no_cnn;
  try {
    const auto paths = toy::generate(out, opt);
    std::printf("%s\n%s\n", paths.train_manifest.c_str(), paths.test_manifest.c_str());
  } catch (const hcd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const hcd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
