// Copyright 2026 The disclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Region views fed to the image encoder: a plain crop, the whole image
// blurred everywhere except the region, and a mirror-padded square crop.
// All views are resized to the encoder's square input resolution.

#pragma once

#include <vector>

#include "backends.hpp"
#include "core.hpp"
#include "image.hpp"

namespace disclip {

enum class BorderMode { kClamp };

struct ImagingConfig {
  int encoder_resolution = 224;
  double blur_sigma = 10.0;
  BorderMode border_mode = BorderMode::kClamp;

  void validate() const;
};

// Which crop view feeds crop_emb.
enum class CropStyle { kPlain, kMirror };

// Normalized 1-D Gaussian taps over [-r, r], r = ceil(3 sigma). sigma = 0
// yields the single tap {1}.
std::vector<double> gaussian_kernel(double sigma);

// Bilinear resampling with pixel-center alignment and edge clamping.
Image resize_bilinear(const Image& src, int out_w, int out_h);

// Copy of the pixels under bbox, no resize.
Image extract(const Image& image, const BBox& bbox);

// Separable Gaussian blur at full resolution, clamp-to-edge borders.
Image gaussian_blur(const Image& image, double sigma);

// The blurred image with the bbox pixels restored from the input, not resized.
Image blur_outside(const Image& image, const BBox& bbox, double sigma);

// Reflects a w x h crop along its shorter axis until square (no resize).
Image mirror_pad_square(const Image& crop);

Image crop_region(const Image& image, const BBox& bbox, const ImagingConfig& cfg);
Image blur_except(const Image& image, const BBox& bbox, const ImagingConfig& cfg);
Image mirror_pad_crop(const Image& image, const BBox& bbox, const ImagingConfig& cfg);

RegionRepresentation represent_region(const Image& image, const BBox& bbox,
                                      const ImagingConfig& cfg, Encoder& encoder,
                                      CropStyle style = CropStyle::kPlain);

}  // namespace disclip
