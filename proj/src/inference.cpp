#include "uiess/inference.hpp"

#include <cmath>

#include "uiess/errors.hpp"
#include "uiess/latentlab.hpp"
#include "uiess/metrics.hpp"

namespace uiess {

namespace {

namespace F = torch::nn::functional;

int64_t padded_side(int64_t side, int64_t min_side) {
  const int64_t s = std::max(side, min_side);
  return (s + ModelConfig::kContentStride - 1) / ModelConfig::kContentStride * ModelConfig::kContentStride;
}

torch::Tensor pad_input(const torch::Tensor& x, int64_t min_side) {
  const int64_t h = x.size(2), w = x.size(3);
  const int64_t ph = padded_side(h, min_side) - h, pw = padded_side(w, min_side) - w;
  if (ph == 0 && pw == 0) return x;
  auto opts = F::PadFuncOptions({0, pw, 0, ph});
  if (ph < h && pw < w) return F::pad(x, opts.mode(torch::kReflect));
  return F::pad(x, opts.mode(torch::kReplicate));
}

Domain require_degraded(Domain d) {
  if (d != Domain::Syn && d != Domain::Real) throw UsageError("input domain must be syn or real");
  return d;
}

Image to_image(const torch::Tensor& out, int64_t height, int64_t width) {
  auto cropped = out.narrow(2, 0, height).narrow(3, 0, width).squeeze(0);
  if (!torch::isfinite(cropped).all().item<bool>()) throw NumericError("model produced non-finite pixels");
  return Image::from_tensor_clamped(cropped);
}

Image load(const DatasetManifest& m, const std::filesystem::path& rel) { return read_png(m.resolve(rel)); }

}  // namespace

EncodedImage encode_image(UiessModelImpl& model, const Image& image, Domain domain) {
  require_degraded(domain);
  if (image.empty()) throw UsageError("empty image");
  torch::NoGradGuard guard;
  const auto x = pad_input(image.batch(torch::kFloat32), model.config().min_input_side());
  EncodedImage e;
  e.content = model.encode_content(x);
  e.style = model.encode_style(x, domain);
  e.clean_style = model.transform_style(e.style);
  e.height = image.height();
  e.width = image.width();
  return e;
}

Image render(UiessModelImpl& model, const EncodedImage& encoded, double alpha) {
  if (!std::isfinite(alpha)) throw UsageError("alpha must be finite");
  torch::NoGradGuard guard;
  const StyleLatent style = manipulate_style(encoded.style, encoded.clean_style, alpha);
  return to_image(model.decode(encoded.content, style), encoded.height, encoded.width);
}

Image enhance(UiessModelImpl& model, const Image& image, Domain domain) {
  return render(model, encode_image(model, image, domain), 1.0);
}

Image translate(UiessModelImpl& model, const Image& source, const Image& reference, Domain reference_domain) {
  require_degraded(reference_domain);
  torch::NoGradGuard guard;
  const int64_t min_side = model.config().min_input_side();
  const auto content = model.encode_content(pad_input(source.batch(torch::kFloat32), min_side));
  const auto style = model.encode_style(pad_input(reference.batch(torch::kFloat32), min_side), reference_domain);
  return to_image(model.decode(content, style), source.height(), source.width());
}

double color_cast_index(const Image& image) {
  const auto& t = image.tensor();
  return (t[2] - t[0]).abs().mean().item<double>();
}

HeldOutReport evaluate_held_out(UiessModelImpl& model, const DatasetManifest& manifest) {
  HeldOutReport r;
  for (const auto& s : manifest.split(Split::Test)) {
    const Image syn = load(manifest, s.syn), clean = load(manifest, s.clean);
    const Image enh = enhance(model, syn, Domain::Syn);
    r.psnr_identity += psnr(syn, clean);
    r.psnr_enhanced += psnr(enh, clean);
    r.ssim_identity += ssim_metric(syn, clean);
    r.ssim_enhanced += ssim_metric(enh, clean);
    ++r.count;
  }
  if (r.count == 0) throw DataError("dataset has no held-out samples");
  const double n = static_cast<double>(r.count);
  r.psnr_identity /= n;
  r.psnr_enhanced /= n;
  r.ssim_identity /= n;
  r.ssim_enhanced /= n;
  return r;
}

std::vector<double> alpha_sweep_cast(UiessModelImpl& model, const DatasetManifest& manifest,
                                     const std::vector<double>& alphas) {
  std::vector<double> sums(alphas.size(), 0.0);
  int64_t n = 0;
  for (const auto& s : manifest.split(Split::Test)) {
    const std::pair<const std::filesystem::path*, Domain> inputs[] = {{&s.syn, Domain::Syn}, {&s.real, Domain::Real}};
    for (const auto& [path, domain] : inputs) {
      const EncodedImage e = encode_image(model, load(manifest, *path), domain);
      for (size_t i = 0; i < alphas.size(); ++i) sums[i] += color_cast_index(render(model, e, alphas[i]));
      ++n;
    }
  }
  if (n == 0) throw DataError("dataset has no held-out samples");
  for (auto& v : sums) v /= static_cast<double>(n);
  return sums;
}

}  // namespace uiess
