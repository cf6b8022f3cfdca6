#pragma once

#include <string>
#include <vector>

#include "crossseg/image_ops.hpp"

namespace crossseg {

struct LabeledSample {
  Image image;  // [3,H,W] in [0,1]
  Mask mask;    // [H,W] in {0,1,2}
  std::string id;
};

struct UnlabeledSample {
  Image image;
  std::string id;
};

struct SyntheticConfig {
  int num_labeled = 0;
  int num_unlabeled = 0;
  int num_val = 0;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
  double noise_sigma = 0.05;

  void validate() const {
    CROSSSEG_CHECK(num_labeled >= 0 && num_unlabeled >= 0 && num_val >= 0,
                   "SyntheticConfig: counts must be >= 0");
    CROSSSEG_CHECK(height >= 32 && width >= 32 && height % 32 == 0 && width % 32 == 0,
                   "SyntheticConfig: height/width must be >= 32 and divisible by 32, got "
                       << height << "x" << width);
    CROSSSEG_CHECK(noise_sigma >= 0.0, "SyntheticConfig: noise_sigma must be >= 0");
  }
};

struct DatasetManifest {
  std::vector<std::string> labeled;
  std::vector<std::string> unlabeled;
  std::vector<std::string> val;
};

void save_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& path);

// One synthetic sample: speckle background with two disjoint bright regions, a
// crescent (class 1, upper) and an ellipse (class 2, lower). Pure function of
// (cfg, id_seed). Every mask carries >= 50 pixels of each foreground class.
void synthesize_sample(const SyntheticConfig& cfg, std::uint64_t id_seed, Image* image, Mask* mask);

// Writes images/<id>.png, masks/<id>.png (labeled + val splits) and
// manifest.json under out_dir. Deterministic function of cfg.
DatasetManifest generate_synthetic_dataset(const SyntheticConfig& cfg, const std::string& out_dir);

struct Dataset {
  std::vector<LabeledSample> labeled;
  std::vector<UnlabeledSample> unlabeled;
  std::vector<LabeledSample> val;
};

// Reads the manifest and splits, normalizes images to [0,1], validates mask
// values against {0,1,2} and shape agreement. Lists come back sorted by id.
Dataset load_dataset(const std::string& dir);

}  // namespace crossseg
