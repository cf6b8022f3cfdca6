#include "crossseg/augment.hpp"

namespace crossseg {

AugmentParams sample_augment_params(Rng& rng) {
  AugmentParams p;
  p.angle_deg = rng.uniform(-20.0, 20.0);
  p.apply_brightness_contrast = rng.bernoulli(0.3);
  p.brightness = rng.uniform(-0.2, 0.2);
  p.contrast = rng.uniform(0.8, 1.2);
  p.apply_blur = rng.bernoulli(0.3);
  p.blur_sigma = rng.uniform(0.5, 1.5);
  p.apply_noise = rng.bernoulli(0.3);
  p.noise_sigma = rng.uniform(0.01, 0.05);
  p.noise_seed = rng.next_u64();
  return p;
}

LabeledSample apply_augment(const LabeledSample& sample, const AugmentParams& params) {
  LabeledSample out;
  out.id = sample.id;
  if (params.angle_deg != 0.0) {
    out.image = rotate_image(sample.image, params.angle_deg);
    out.mask = rotate_mask(sample.mask, params.angle_deg);
  } else {
    out.image = sample.image;
    out.mask = sample.mask;
  }
  if (params.apply_brightness_contrast)
    out.image = adjust_brightness_contrast(out.image, static_cast<float>(params.brightness),
                                           static_cast<float>(params.contrast));
  if (params.apply_blur) out.image = gaussian_blur(out.image, params.blur_sigma);
  if (params.apply_noise) {
    Rng noise_rng(params.noise_seed);
    out.image = add_gaussian_noise(out.image, params.noise_sigma, noise_rng);
  }
  out.image = clamp01(std::move(out.image));
  return out;
}

LabeledSample augment_labeled(const LabeledSample& sample, Rng& rng) {
  return apply_augment(sample, sample_augment_params(rng));
}

}  // namespace crossseg
