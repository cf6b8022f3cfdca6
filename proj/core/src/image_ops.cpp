#include "crossseg/image_ops.hpp"

namespace crossseg {

Image resize_bilinear(const Image& img, index_t out_h, index_t out_w) {
  CROSSSEG_CHECK(img.ndim() == 3, "resize_bilinear: expected [C,H,W]");
  CROSSSEG_CHECK(out_h > 0 && out_w > 0, "resize_bilinear: target size must be positive");
  index_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  if (out_h == H && out_w == W) return img;
  Image out({C, out_h, out_w});
  double sy = static_cast<double>(H) / out_h, sx = static_cast<double>(W) / out_w;
  for (index_t y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    index_t y0 = static_cast<index_t>(std::floor(fy));
    double wy = fy - y0;
    index_t y0c = std::clamp<index_t>(y0, 0, H - 1), y1c = std::clamp<index_t>(y0 + 1, 0, H - 1);
    for (index_t x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      index_t x0 = static_cast<index_t>(std::floor(fx));
      double wx = fx - x0;
      index_t x0c = std::clamp<index_t>(x0, 0, W - 1), x1c = std::clamp<index_t>(x0 + 1, 0, W - 1);
      for (index_t c = 0; c < C; ++c) {
        double top = (1.0 - wx) * img.at(c, y0c, x0c) + wx * img.at(c, y0c, x1c);
        double bot = (1.0 - wx) * img.at(c, y1c, x0c) + wx * img.at(c, y1c, x1c);
        out.at(c, y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

Mask resize_nearest(const Mask& mask, index_t out_h, index_t out_w) {
  CROSSSEG_CHECK(mask.ndim() == 2, "resize_nearest: expected [H,W]");
  CROSSSEG_CHECK(out_h > 0 && out_w > 0, "resize_nearest: target size must be positive");
  index_t H = mask.dim(0), W = mask.dim(1);
  if (out_h == H && out_w == W) return mask;
  Mask out({out_h, out_w});
  double sy = static_cast<double>(H) / out_h, sx = static_cast<double>(W) / out_w;
  for (index_t y = 0; y < out_h; ++y) {
    index_t ys = std::clamp<index_t>(static_cast<index_t>(std::floor((y + 0.5) * sy)), 0, H - 1);
    for (index_t x = 0; x < out_w; ++x) {
      index_t xs = std::clamp<index_t>(static_cast<index_t>(std::floor((x + 0.5) * sx)), 0, W - 1);
      out.at(y, x) = mask.at(ys, xs);
    }
  }
  return out;
}

void rotation_source(double angle_deg, index_t h, index_t w, index_t y, index_t x, double* src_y,
                     double* src_x) {
  double rad = angle_deg * 3.14159265358979323846 / 180.0;
  double cy = (h - 1) * 0.5, cx = (w - 1) * 0.5;
  double dy = y - cy, dx = x - cx;
  double c = std::cos(rad), s = std::sin(rad);
  *src_x = cx + dx * c + dy * s;
  *src_y = cy - dx * s + dy * c;
}

Image rotate_image(const Image& img, double angle_deg) {
  CROSSSEG_CHECK(img.ndim() == 3, "rotate_image: expected [C,H,W]");
  index_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Image out({C, H, W});
  for (index_t y = 0; y < H; ++y)
    for (index_t x = 0; x < W; ++x) {
      double fy, fx;
      rotation_source(angle_deg, H, W, y, x, &fy, &fx);
      index_t y0 = static_cast<index_t>(std::floor(fy)), x0 = static_cast<index_t>(std::floor(fx));
      double wy = fy - y0, wx = fx - x0;
      for (index_t c = 0; c < C; ++c) {
        auto sample = [&](index_t yy, index_t xx) -> double {
          if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;  // background fill
          return img.at(c, yy, xx);
        };
        double top = (1.0 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1);
        double bot = (1.0 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1);
        out.at(c, y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  return out;
}

Mask rotate_mask(const Mask& mask, double angle_deg) {
  CROSSSEG_CHECK(mask.ndim() == 2, "rotate_mask: expected [H,W]");
  index_t H = mask.dim(0), W = mask.dim(1);
  Mask out({H, W});
  for (index_t y = 0; y < H; ++y)
    for (index_t x = 0; x < W; ++x) {
      double fy, fx;
      rotation_source(angle_deg, H, W, y, x, &fy, &fx);
      index_t ys = static_cast<index_t>(std::lround(fy)), xs = static_cast<index_t>(std::lround(fx));
      out.at(y, x) = (ys < 0 || ys >= H || xs < 0 || xs >= W) ? 0 : mask.at(ys, xs);
    }
  return out;
}

Image adjust_brightness_contrast(const Image& img, float brightness, float contrast) {
  Image out = img;
  for (index_t i = 0; i < out.numel(); ++i) out[i] = contrast * out[i] + brightness;
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  CROSSSEG_CHECK(img.ndim() == 3, "gaussian_blur: expected [C,H,W]");
  CROSSSEG_CHECK(sigma > 0.0, "gaussian_blur: sigma must be positive");
  index_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  index_t radius = static_cast<index_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (index_t i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : kernel) v /= sum;

  Image tmp({C, H, W}), out({C, H, W});
  for (index_t c = 0; c < C; ++c) {
    for (index_t y = 0; y < H; ++y)
      for (index_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (index_t k = -radius; k <= radius; ++k) {
          index_t xx = std::clamp<index_t>(x + k, 0, W - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * img.at(c, y, xx);
        }
        tmp.at(c, y, x) = static_cast<float>(acc);
      }
    for (index_t y = 0; y < H; ++y)
      for (index_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (index_t k = -radius; k <= radius; ++k) {
          index_t yy = std::clamp<index_t>(y + k, 0, H - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(c, yy, x);
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
  }
  return out;
}

Image add_gaussian_noise(const Image& img, double sigma, Rng& rng) {
  Image out = img;
  for (index_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<float>(out[i] + rng.normal(0.0, sigma));
  return out;
}

Image clamp01(Image img) {
  for (index_t i = 0; i < img.numel(); ++i) img[i] = std::clamp(img[i], 0.0f, 1.0f);
  return img;
}

}  // namespace crossseg
