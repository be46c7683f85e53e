#pragma once

#include <vector>

#include "uiess/datasynth.hpp"
#include "uiess/image.hpp"
#include "uiess/model.hpp"

namespace uiess {

/// Latents of one image, computed once and rendered at any alpha.
/// Inputs are reflect-padded up to a multiple of 4 (and the model's minimum side); renders are
/// cropped back to the original size.
struct EncodedImage {
  ContentLatent content;
  StyleLatent style;
  StyleLatent clean_style;
  int64_t height = 0;
  int64_t width = 0;
};

/// `domain` is the degraded domain the image belongs to (Syn or Real).
EncodedImage encode_image(UiessModelImpl& model, const Image& image, Domain domain);

/// Decodes with manipulate_style(style, clean_style, alpha). alpha = 1 is full enhancement,
/// alpha = 0 the self reconstruction.
Image render(UiessModelImpl& model, const EncodedImage& encoded, double alpha);

Image enhance(UiessModelImpl& model, const Image& image, Domain domain);

/// Content of `source`, style of `reference` (which belongs to `reference_domain`).
Image translate(UiessModelImpl& model, const Image& source, const Image& reference, Domain reference_domain);

/// Mean |B - R| over all pixels.
double color_cast_index(const Image& image);

struct HeldOutReport {
  int64_t count = 0;
  double psnr_identity = 0.0;  // PSNR(I_S, I_C)
  double psnr_enhanced = 0.0;  // PSNR(enhance(I_S), I_C)
  double ssim_identity = 0.0;
  double ssim_enhanced = 0.0;
};

/// Means over the test split of the manifest (synthetic inputs against their clean targets).
HeldOutReport evaluate_held_out(UiessModelImpl& model, const DatasetManifest& manifest);

/// Mean color-cast index of renders at each alpha, over the test split's synthetic and real inputs.
std::vector<double> alpha_sweep_cast(UiessModelImpl& model, const DatasetManifest& manifest,
                                     const std::vector<double>& alphas);

}  // namespace uiess
