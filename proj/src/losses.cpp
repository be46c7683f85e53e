#include "uiess/losses.hpp"

#include <cmath>

#include "uiess/errors.hpp"

namespace uiess {

namespace F = torch::nn::functional;

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw UsageError(std::string(what) + ": shape mismatch");
}

torch::Tensor mae(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  check_same_shape(a, b, what);
  return (a - b).abs().mean();
}

torch::Tensor as_batch(const torch::Tensor& x) { return x.dim() == 3 ? x.unsqueeze(0) : x; }

}  // namespace

torch::Tensor loss_cycle(const torch::Tensor& x, const torch::Tensor& y, const torch::Tensor& x_cyc,
                         const torch::Tensor& y_cyc) {
  return mae(x_cyc, x, "loss_cycle") + mae(y_cyc, y, "loss_cycle");
}

torch::Tensor loss_self(const torch::Tensor& x, const torch::Tensor& x_rec, const torch::Tensor& y,
                        const torch::Tensor& y_rec) {
  return mae(x_rec, x, "loss_self") + mae(y_rec, y, "loss_self");
}

torch::Tensor loss_gan(const std::vector<torch::Tensor>& scores_real, const std::vector<torch::Tensor>& scores_fake,
                       GanSide side, GanObjective objective) {
  if (scores_fake.empty()) throw UsageError("loss_gan: empty score list");
  if (side == GanSide::Discriminator && scores_real.size() != scores_fake.size()) {
    throw UsageError("loss_gan: real and fake score lists differ in length");
  }
  torch::Tensor total = torch::zeros({}, scores_fake.front().options());
  for (size_t i = 0; i < scores_fake.size(); ++i) {
    const auto& fake = scores_fake[i];
    if (objective == GanObjective::LeastSquares) {
      if (side == GanSide::Generator) {
        total = total + (fake - 1.0).pow(2).mean();
      } else {
        total = total + (scores_real[i] - 1.0).pow(2).mean() + fake.pow(2).mean();
      }
    } else {
      // -log(sigmoid(s)) = softplus(-s); -log(1 - sigmoid(s)) = softplus(s)
      if (side == GanSide::Generator) {
        total = total + F::softplus(-fake).mean();
      } else {
        total = total + F::softplus(-scores_real[i]).mean() + F::softplus(fake).mean();
      }
    }
  }
  return total;
}

torch::Tensor loss_pixel(const torch::Tensor& enh_a, const torch::Tensor& enh_b, const torch::Tensor& target) {
  return mae(enh_a, target, "loss_pixel") + mae(enh_b, target, "loss_pixel");
}

torch::Tensor ssim(const torch::Tensor& a_in, const torch::Tensor& b_in, const SsimOptions& options) {
  check_same_shape(a_in, b_in, "ssim");
  const auto a = as_batch(a_in);
  const auto b = as_batch(b_in);
  const int64_t win = options.window;
  if (win < 1 || win % 2 == 0) throw UsageError("ssim window must be odd");
  if (win > a.size(2) || win > a.size(3)) throw UsageError("ssim window larger than the image");

  const auto box = F::AvgPool2dFuncOptions(win).stride(1);
  auto mu_a = F::avg_pool2d(a, box);
  auto mu_b = F::avg_pool2d(b, box);
  auto var_a = F::avg_pool2d(a * a, box) - mu_a * mu_a;
  auto var_b = F::avg_pool2d(b * b, box) - mu_b * mu_b;
  auto cov = F::avg_pool2d(a * b, box) - mu_a * mu_b;
  auto num = (2 * mu_a * mu_b + options.c1) * (2 * cov + options.c2);
  auto den = (mu_a * mu_a + mu_b * mu_b + options.c1) * (var_a + var_b + options.c2);
  return (num / den).mean();
}

torch::Tensor loss_ssim_pair(const torch::Tensor& enh_a, const torch::Tensor& enh_b, const torch::Tensor& target,
                             const SsimOptions& options) {
  return (1.0 - ssim(enh_a, target, options)) + (1.0 - ssim(enh_b, target, options));
}

PerceptualExtractor::PerceptualExtractor(uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  const int64_t channels[] = {3, 16, 32, 64};
  const int64_t strides[] = {1, 2, 2};
  for (int i = 0; i < 3; ++i) {
    const double fan_in = static_cast<double>(channels[i] * 9);
    auto w = at::normal(0.0, std::sqrt(2.0 / fan_in), {channels[i + 1], channels[i], 3, 3}, gen);
    stages_.push_back({w.to(torch::kFloat32), torch::zeros({channels[i + 1]}), strides[i]});
  }
}

std::vector<torch::Tensor> PerceptualExtractor::features(const torch::Tensor& images) const {
  std::vector<torch::Tensor> out;
  auto x = as_batch(images);
  for (const auto& stage : stages_) {
    x = torch::relu(F::conv2d(x, stage.weight.to(x.scalar_type()),
                              F::Conv2dFuncOptions().bias(stage.bias.to(x.scalar_type())).stride(stage.stride).padding(1)));
    out.push_back(x);
  }
  return out;
}

torch::Tensor loss_perceptual(const torch::Tensor& enh_a, const torch::Tensor& enh_b, const torch::Tensor& target,
                              const PerceptualExtractor& net) {
  check_same_shape(enh_a, target, "loss_perceptual");
  check_same_shape(enh_b, target, "loss_perceptual");
  const auto ft = net.features(target);
  const auto fa = net.features(enh_a);
  const auto fb = net.features(enh_b);
  torch::Tensor total = torch::zeros({}, target.options());
  for (size_t j = 0; j < ft.size(); ++j) {
    // ||.||^2 / (c h w), averaged over the batch.
    const double chw = static_cast<double>(ft[j].numel() / ft[j].size(0));
    total = total + (fa[j] - ft[j]).pow(2).sum() / (chw * ft[j].size(0));
    total = total + (fb[j] - ft[j]).pow(2).sum() / (chw * ft[j].size(0));
  }
  return total;
}

torch::Tensor loss_tv(const torch::Tensor& img_in) {
  const auto img = as_batch(img_in);
  if (img.size(2) < 2 || img.size(3) < 2) throw UsageError("loss_tv needs H, W >= 2");
  const int64_t h = img.size(2), w = img.size(3);
  auto base = img.narrow(2, 0, h - 1).narrow(3, 0, w - 1);
  auto dv = base - img.narrow(2, 1, h - 1).narrow(3, 0, w - 1);
  auto dh = base - img.narrow(2, 0, h - 1).narrow(3, 1, w - 1);
  return torch::sqrt(dv * dv + dh * dh + kTvEps).sum() / static_cast<double>(img.size(0));
}

torch::Tensor loss_latent(const torch::Tensor& z_sc, const torch::Tensor& z_rc) {
  check_same_shape(z_sc, z_rc, "loss_latent");
  auto diff = (z_sc - z_rc).abs();
  return diff.dim() == 1 ? diff.sum() : diff.sum(-1).mean();
}

torch::Tensor loss_latent(const StyleLatent& z_sc, const StyleLatent& z_rc) {
  if (z_sc.domain != Domain::Clean || z_rc.domain != Domain::Clean) {
    throw UsageError("loss_latent expects two clean style latents");
  }
  return loss_latent(z_sc.vector, z_rc.vector);
}

void LossWeights::validate() const {
  for (double w : {lambda_self, lambda_latent, lambda_tv, lambda_per, lambda_iq}) {
    if (!std::isfinite(w) || w < 0.0) throw UsageError("loss weights must be finite and non-negative");
  }
}

LossReport aggregate(const LossTerms& t, const LossWeights& w) {
  LossReport r;
  r.terms = t;
  r.iq = t.ssim + t.pixel;
  r.tran = t.gan_g + w.lambda_self * t.self + t.cyc;
  r.en = w.lambda_latent * t.latent + w.lambda_tv * t.tv + w.lambda_per * t.per + w.lambda_iq * r.iq;
  r.total = r.tran + r.en;
  return r;
}

std::vector<std::string> LossReport::csv_columns() {
  return {"cyc", "self", "gan_g", "gan_d", "pixel", "ssim", "per", "tv", "latent", "iq", "tran", "en", "total"};
}

std::vector<double> LossReport::csv_values() const {
  return {terms.cyc, terms.self, terms.gan_g, terms.gan_d, terms.pixel, terms.ssim, terms.per,
          terms.tv,  terms.latent, iq,        tran,        en,          total};
}

}  // namespace uiess
