#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "uiess/model.hpp"

namespace uiess {

// All image arguments are N×3×H×W (or 3×H×W) tensors; every function is differentiable
// through libtorch autograd and returns a 0-dim tensor.

torch::Tensor loss_cycle(const torch::Tensor& x, const torch::Tensor& y, const torch::Tensor& x_cyc,
                         const torch::Tensor& y_cyc);
torch::Tensor loss_self(const torch::Tensor& x, const torch::Tensor& x_rec, const torch::Tensor& y,
                        const torch::Tensor& y_rec);

enum class GanSide { Generator, Discriminator };
enum class GanObjective { LeastSquares, Log };

/// Summed over scales. The generator side ignores `scores_real`.
torch::Tensor loss_gan(const std::vector<torch::Tensor>& scores_real, const std::vector<torch::Tensor>& scores_fake,
                       GanSide side, GanObjective objective = GanObjective::LeastSquares);
inline torch::Tensor loss_lsgan(const std::vector<torch::Tensor>& scores_real,
                                const std::vector<torch::Tensor>& scores_fake, GanSide side) {
  return loss_gan(scores_real, scores_fake, side, GanObjective::LeastSquares);
}

torch::Tensor loss_pixel(const torch::Tensor& enh_a, const torch::Tensor& enh_b, const torch::Tensor& target);

struct SsimOptions {
  int64_t window = 7;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

/// Mean local SSIM with a uniform box window, computed per channel and averaged.
torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimOptions& options = {});
torch::Tensor loss_ssim_pair(const torch::Tensor& enh_a, const torch::Tensor& enh_b, const torch::Tensor& target,
                             const SsimOptions& options = {});

/// Frozen random convolutional pyramid standing in for a pretrained feature network.
class PerceptualExtractor {
 public:
  struct Stage {
    torch::Tensor weight;  // out×in×3×3
    torch::Tensor bias;
    int64_t stride;
  };

  /// Three 3×3 conv + ReLU stages (16, 32, 64 channels; strides 1, 2, 2), He-scaled weights from `seed`.
  explicit PerceptualExtractor(uint64_t seed = 0);
  explicit PerceptualExtractor(std::vector<Stage> stages) : stages_(std::move(stages)) {}

  /// Output of every stage, in order.
  std::vector<torch::Tensor> features(const torch::Tensor& images) const;
  const std::vector<Stage>& stages() const { return stages_; }

 private:
  std::vector<Stage> stages_;
};

torch::Tensor loss_perceptual(const torch::Tensor& enh_a, const torch::Tensor& enh_b, const torch::Tensor& target,
                              const PerceptualExtractor& net);

inline constexpr double kTvEps = 1e-8;
/// Isotropic total variation, summed over pixels and channels (mean over the batch).
torch::Tensor loss_tv(const torch::Tensor& img);

/// L1 distance between two clean style vectors (mean over the batch).
torch::Tensor loss_latent(const StyleLatent& z_sc, const StyleLatent& z_rc);
torch::Tensor loss_latent(const torch::Tensor& z_sc, const torch::Tensor& z_rc);

struct LossWeights {
  double lambda_self = 10.0;
  double lambda_latent = 1.0;
  double lambda_tv = 1e-4;
  double lambda_per = 0.5;
  double lambda_iq = 10.0;

  void validate() const;
};

/// Raw (unweighted) loss terms of one step.
struct LossTerms {
  double cyc = 0, self = 0, gan_g = 0, gan_d = 0, pixel = 0, ssim = 0, per = 0, tv = 0, latent = 0;
};

struct LossReport {
  LossTerms terms;
  double iq = 0;     // ssim + pixel
  double tran = 0;   // gan_g + lambda_self * self + cyc
  double en = 0;     // lambda_latent * latent + lambda_tv * tv + lambda_per * per + lambda_iq * iq
  double total = 0;  // tran + en

  static std::vector<std::string> csv_columns();
  std::vector<double> csv_values() const;
};

LossReport aggregate(const LossTerms& terms, const LossWeights& weights);

}  // namespace uiess
