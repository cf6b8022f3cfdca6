#pragma once

#include "crossseg/data.hpp"
#include "crossseg/rng.hpp"

namespace crossseg {

// One draw of the augmentation policy. Values for every step are drawn even
// when that step's gate is off, so the stream advances identically either way.
struct AugmentParams {
  double angle_deg = 0.0;  // always applied
  bool apply_brightness_contrast = false;
  double brightness = 0.0;  // Uniform(-0.2, 0.2)
  double contrast = 1.0;    // Uniform(0.8, 1.2)
  bool apply_blur = false;
  double blur_sigma = 1.0;  // Uniform(0.5, 1.5)
  bool apply_noise = false;
  double noise_sigma = 0.02;      // Uniform(0.01, 0.05)
  std::uint64_t noise_seed = 0;   // seeds the per-pixel noise draw
};

AugmentParams sample_augment_params(Rng& rng);

// Rotation (image bilinear / mask nearest, background fill), then the three
// gated photometric steps, then one clamp back to [0,1].
LabeledSample apply_augment(const LabeledSample& sample, const AugmentParams& params);

LabeledSample augment_labeled(const LabeledSample& sample, Rng& rng);

}  // namespace crossseg
