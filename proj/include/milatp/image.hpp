#pragma once

#include <cstdint>
#include <string>

#include "milatp/types.hpp"

namespace milatp {

/// Decodes a PNG or TIFF file (8/16-bit, grayscale or RGB) into a grayscale
/// float raster with intensities in [0,1]. RGB inputs are reduced with the
/// Rec.601 luminance weights. Throws std::runtime_error on unreadable files.
ImageF load_image(const std::string& path);

/// Writes a [0,1] raster as 16-bit grayscale PNG. Values are clipped and
/// rounded; the encoder settings are fixed so identical inputs produce
/// byte-identical files.
void save_png16(const std::string& path, const ImageF& img);

ImageF center_square_crop(const ImageF& img);

/// Bilinear resample. Identical input and output sizes return the input
/// values unchanged.
ImageF resize_bilinear(const ImageF& img, Index out_h, Index out_w);

/// Per-image standardization to zero mean and unit variance. A variance
/// floor keeps constant images finite (they map to all zeros).
ImageF standardize(const ImageF& img, float eps = 1e-6f);

/// Full inference-time pipeline: center square crop, bilinear resample to
/// resolution x resolution, standardize.
ImageF preprocess(const ImageF& img, Index resolution);

ImageF flip_horizontal(const ImageF& img);
ImageF flip_vertical(const ImageF& img);

/// Rotation about the image center with bilinear sampling; out-of-bounds
/// reads are reflected at the border.
ImageF rotate_reflect(const ImageF& img, double angle_rad);

struct AugmentConfig {
  double flip_prob = 0.5;
  double brightness_frac = 0.10;     ///< shift range as fraction of image std
  double max_rotation_deg = 15.0;
  bool enabled = true;
};

/// Stochastic training augmentation: horizontal/vertical flips, global
/// brightness shift, small rotation. Deterministic for a fixed seed; callers
/// derive one seed per (sample, epoch) to get independent substreams.
ImageF augment(const ImageF& img, const AugmentConfig& cfg, std::uint64_t seed);

}  // namespace milatp
