#pragma once

#include <string>
#include <vector>

#include "milatp/data.hpp"
#include "milatp/types.hpp"

namespace milatp {

struct SynthConfig {
  int image_size = 512;
  int organoids_min = 0;
  int organoids_max = 12;
  double radius_min = 18.0;
  double radius_max = 55.0;
  double viability_min = 0.05;
  double viability_max = 1.0;
  double atp_per_area = 3.0;  // ATP units per live pixel
  int impurities_min = 4;
  int impurities_max = 12;
  int vacuoles_min = 2;
  int vacuoles_max = 6;
  double noise_sigma = 0.02;
  double well_radius_frac = 0.46;  // well radius as a fraction of image size
  int group_size = 0;  // wells per group_id in manifests; 0 disables groups
  unsigned long long seed = 0;

  std::vector<std::string> validate() const {
    std::vector<std::string> errors;
    if (image_size < 32)
      errors.push_back("synth.image_size must be at least 32");
    if (organoids_min < 0 || organoids_max < organoids_min)
      errors.push_back("synth.organoids range is degenerate");
    if (!(radius_min > 0.0) || radius_max < radius_min)
      errors.push_back("synth.radius range is degenerate");
    if (viability_min < 0.0 || viability_max > 1.0 ||
        viability_max < viability_min)
      errors.push_back("synth.viability range must lie within [0, 1]");
    if (!(atp_per_area > 0.0))
      errors.push_back("synth.atp_per_area must be positive");
    if (impurities_min < 0 || impurities_max < impurities_min)
      errors.push_back("synth.impurities range is degenerate");
    if (vacuoles_min < 0 || vacuoles_max < vacuoles_min)
      errors.push_back("synth.vacuoles range is degenerate");
    if (noise_sigma < 0.0)
      errors.push_back("synth.noise_sigma must be non-negative");
    if (!(well_radius_frac > 0.0) || well_radius_frac > 0.5)
      errors.push_back("synth.well_radius_frac must be in (0, 0.5]");
    if (group_size < 0)
      errors.push_back("synth.group_size must be non-negative");
    return errors;
  }
};

struct SynthObject {
  std::string type;  // "organoid", "impurity", "vacuole"
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  double viability = 0.0;  // zero for non-organoids
  long area_px = 0;        // pixel-count area; zero for non-organoids
};

struct WellRecord {
  ImageF image;
  double atp = 0.0;
  std::vector<SynthObject> objects;
};

/// Renders one synthetic well. Ground truth is exact by construction:
/// atp = atp_per_area * sum over organoids of (pixel-count area * viability).
/// Organoid placement, appearance, and the pixel noise field are driven by
/// RNG streams independent of the impurity/vacuole stream, so changing the
/// clutter load leaves the organoids and the label untouched.
WellRecord synthesize_well(const SynthConfig& cfg, unsigned long long seed);

/// Variant used by robustness experiments: multiplies the drawn clutter
/// counts by `clutter_scale` while reusing the organoid and noise streams.
WellRecord synthesize_well_scaled(const SynthConfig& cfg,
                                  unsigned long long seed,
                                  double clutter_scale);

/// Writes n wells into out_dir as 16-bit grayscale PNGs with one JSON
/// metadata sidecar each, plus manifest.csv. Returns the loaded-back
/// manifest. Well i uses the deterministic seed mix(cfg.seed, i).
DatasetManifest synthesize_dataset(int n, const SynthConfig& cfg,
                                   const std::string& out_dir,
                                   double clutter_scale = 1.0);

/// Deterministic per-well seed derivation.
unsigned long long well_seed(unsigned long long base, long index);

}  // namespace milatp
