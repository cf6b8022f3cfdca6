#pragma once

#include "crossseg/rng.hpp"
#include "crossseg/tensor.hpp"

namespace crossseg {

using Image = Tensor<float>;        // [3, H, W], nominally in [0,1]
using Mask = Tensor<std::int32_t>;  // [H, W], labels {0,1,2}

// Bilinear, half-pixel centers. target dims must be positive.
Image resize_bilinear(const Image& img, index_t out_h, index_t out_w);

// Nearest-neighbor, half-pixel centers; never invents label values.
Mask resize_nearest(const Mask& mask, index_t out_h, index_t out_w);

// Continuous source coordinates for the rotation that both rotate_image and
// rotate_mask use, exposed so the image/mask pairing can be tested directly:
// rotating by `angle_deg` about the image center maps destination pixel
// (y, x) to this source location.
void rotation_source(double angle_deg, index_t h, index_t w, index_t y, index_t x, double* src_y,
                     double* src_x);

// Rotation about the center; bilinear sampling, out-of-frame reads as 0.
Image rotate_image(const Image& img, double angle_deg);
// Same geometry with nearest-neighbor label picking; out-of-frame is class 0.
Mask rotate_mask(const Mask& mask, double angle_deg);

// out = contrast * v + brightness, unclamped (callers clamp once at the end).
Image adjust_brightness_contrast(const Image& img, float brightness, float contrast);

// Separable Gaussian, radius ceil(3*sigma), replicated borders.
Image gaussian_blur(const Image& img, double sigma);

// Adds iid Gaussian noise to every value.
Image add_gaussian_noise(const Image& img, double sigma, Rng& rng);

Image clamp01(Image img);

}  // namespace crossseg
