#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmjnd/image.hpp"

namespace hmjnd {

/// Aligned set of modality planes for one scene: RGB plus the saliency,
/// depth, and segmentation priors derived from it, with optional ground
/// truth for training. Segmentation keeps both the [0,1]-scaled plane and
/// the raw class indices.
struct ModalityBundle {
  ImagePlane rgb;           // 3-channel
  ImagePlane saliency;      // 1-channel
  ImagePlane depth;         // 1-channel
  ImagePlane segmentation;  // 1-channel, label/(K-1)
  std::vector<std::uint8_t> seg_labels;
  int num_classes = 0;
  ImagePlane ground_truth;  // 3-channel; may be empty

  bool has_ground_truth() const { return !ground_truth.empty(); }
  int width() const { return rgb.width; }
  int height() const { return rgb.height; }
};

/// Reads rgb.ppm, saliency.pgm, depth.pgm, segmentation.pgm (+ optional
/// gt.ppm) from dir, checking that every plane shares the RGB dimensions.
ModalityBundle load_bundle(const std::string& dir);
void save_bundle(const ModalityBundle& bundle, const std::string& dir);

/// Extra generator state exposed for tests: where texture was painted and
/// how strong it is.
struct SynthInfo {
  std::vector<std::uint8_t> textured_mask;  // 1 per textured pixel
  std::vector<double> texture_energy;
};

/// Deterministic synthetic scene: gradient background, a few flat/textured
/// objects, depth ramp with per-object offsets, one salient object, and a
/// ground truth whose deviation from RGB grows with local texture (modulated
/// by the segmentation / depth / saliency priors, so every modality carries
/// signal the RGB alone does not).
ModalityBundle synth_bundle(std::uint64_t seed, int w, int h, SynthInfo* info = nullptr);

/// Table-1-style modality ablation: disabled prior planes are replaced by a
/// copy of the designated enabled plane; with nothing enabled the RGB luma
/// stands in for all three.
ModalityBundle apply_modality_ablation(const ModalityBundle& b, bool use_saliency,
                                       bool use_depth, bool use_segmentation,
                                       const std::string& substitute = "saliency");

}  // namespace hmjnd
