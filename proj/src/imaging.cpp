// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "imaging.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace disclip {

Image::Image(int w, int h)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

Image::Image(int w, int h, std::vector<std::uint8_t> data)
    : width(w), height(h), pixels(std::move(data)) {
  if (w <= 0 || h <= 0 || pixels.size() != static_cast<std::size_t>(w) * h * 3) {
    std::ostringstream msg;
    msg << "image: pixel buffer of " << pixels.size() << " bytes does not match " << w << "x" << h
        << " RGB";
    fail(ErrorKind::kInvalidArgument, msg.str());
  }
}

void ImagingConfig::validate() const {
  if (encoder_resolution < 1) fail(ErrorKind::kConfig, "encoder_resolution: must be >= 1");
  if (!(blur_sigma >= 0.0) || !std::isfinite(blur_sigma)) {
    fail(ErrorKind::kConfig, "blur_sigma: must be finite and >= 0");
  }
}

namespace {

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

void check_image(const Image& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    fail(ErrorKind::kInvalidArgument, "image: malformed pixel grid");
  }
}

}  // namespace

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    fail(ErrorKind::kInvalidArgument, "blur_sigma: must be finite and >= 0");
  }
  if (sigma == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    taps[i + radius] = w;
    sum += w;
  }
  for (double& w : taps) w /= sum;
  return taps;
}

Image resize_bilinear(const Image& src, int out_w, int out_h) {
  check_image(src);
  if (out_w < 1 || out_h < 1) fail(ErrorKind::kInvalidArgument, "resize: target must be >= 1 px");
  if (out_w == src.width && out_h == src.height) return src;

  Image out(out_w, out_h);
  const double scale_x = static_cast<double>(src.width) / out_w;
  const double scale_y = static_cast<double>(src.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double sy = std::clamp((y + 0.5) * scale_y - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double sx = std::clamp((x + 0.5) * scale_x - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - x0;
      const std::uint8_t* p00 = src.at(x0, y0);
      const std::uint8_t* p10 = src.at(x1, y0);
      const std::uint8_t* p01 = src.at(x0, y1);
      const std::uint8_t* p11 = src.at(x1, y1);
      std::uint8_t* dst = out.at(x, y);
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * p00[c] + fx * p10[c];
        const double bottom = (1.0 - fx) * p01[c] + fx * p11[c];
        dst[c] = quantize((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

Image extract(const Image& image, const BBox& bbox) {
  check_image(image);
  check_bbox_in_bounds(bbox, image.width, image.height);
  Image out(bbox.w, bbox.h);
  const std::size_t row_bytes = static_cast<std::size_t>(bbox.w) * 3;
  for (int y = 0; y < bbox.h; ++y) {
    std::copy_n(image.at(bbox.x, bbox.y + y), row_bytes, out.at(0, y));
  }
  return out;
}

Image gaussian_blur(const Image& image, double sigma) {
  check_image(image);
  const std::vector<double> taps = gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  const int w = image.width;
  const int h = image.height;

  // Horizontal pass kept in double so the image is quantized only once.
  std::vector<double> horizontal(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int t = -radius; t <= radius; ++t) {
        const std::uint8_t* p = image.at(std::clamp(x + t, 0, w - 1), y);
        const double weight = taps[t + radius];
        for (int c = 0; c < 3; ++c) acc[c] += weight * p[c];
      }
      double* dst = &horizontal[(static_cast<std::size_t>(y) * w + x) * 3];
      for (int c = 0; c < 3; ++c) dst[c] = acc[c];
    }
  }

  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int t = -radius; t <= radius; ++t) {
        const double* p =
            &horizontal[(static_cast<std::size_t>(std::clamp(y + t, 0, h - 1)) * w + x) * 3];
        const double weight = taps[t + radius];
        for (int c = 0; c < 3; ++c) acc[c] += weight * p[c];
      }
      std::uint8_t* dst = out.at(x, y);
      for (int c = 0; c < 3; ++c) dst[c] = quantize(acc[c]);
    }
  }
  return out;
}

Image blur_outside(const Image& image, const BBox& bbox, double sigma) {
  check_image(image);
  check_bbox_in_bounds(bbox, image.width, image.height);
  Image out = gaussian_blur(image, sigma);
  const std::size_t row_bytes = static_cast<std::size_t>(bbox.w) * 3;
  for (int y = bbox.y; y < bbox.y + bbox.h; ++y) {
    std::copy_n(image.at(bbox.x, y), row_bytes, out.at(bbox.x, y));
  }
  return out;
}

Image mirror_pad_square(const Image& crop) {
  check_image(crop);
  const int side = std::max(crop.width, crop.height);
  // Symmetric reflection including the edge sample: 0 1 .. n-1 n-1 .. 0 0 1 ..
  auto reflect = [](int i, int n) {
    const int m = i % (2 * n);
    return m < n ? m : 2 * n - 1 - m;
  };
  Image out(side, side);
  for (int y = 0; y < side; ++y) {
    const int sy = reflect(y, crop.height);
    for (int x = 0; x < side; ++x) {
      const int sx = reflect(x, crop.width);
      std::copy_n(crop.at(sx, sy), 3, out.at(x, y));
    }
  }
  return out;
}

Image crop_region(const Image& image, const BBox& bbox, const ImagingConfig& cfg) {
  cfg.validate();
  return resize_bilinear(extract(image, bbox), cfg.encoder_resolution, cfg.encoder_resolution);
}

Image blur_except(const Image& image, const BBox& bbox, const ImagingConfig& cfg) {
  cfg.validate();
  return resize_bilinear(blur_outside(image, bbox, cfg.blur_sigma), cfg.encoder_resolution,
                         cfg.encoder_resolution);
}

Image mirror_pad_crop(const Image& image, const BBox& bbox, const ImagingConfig& cfg) {
  cfg.validate();
  return resize_bilinear(mirror_pad_square(extract(image, bbox)), cfg.encoder_resolution,
                         cfg.encoder_resolution);
}

RegionRepresentation represent_region(const Image& image, const BBox& bbox,
                                      const ImagingConfig& cfg, Encoder& encoder,
                                      CropStyle style) {
  const Image crop = style == CropStyle::kMirror ? mirror_pad_crop(image, bbox, cfg)
                                                 : crop_region(image, bbox, cfg);
  RegionRepresentation rep{encoder.encode_image(crop),
                           encoder.encode_image(blur_except(image, bbox, cfg))};
  if (rep.crop_emb.dim() != encoder.dim() || rep.blur_emb.dim() != encoder.dim()) {
    fail(ErrorKind::kBackend, "encoder: image embedding width differs from the advertised dim");
  }
  return rep;
}

}  // namespace disclip
