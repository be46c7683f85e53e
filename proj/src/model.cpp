#include "uiess/model.hpp"

#include <cstdio>

#include "uiess/errors.hpp"

namespace uiess {

namespace F = torch::nn::functional;
using torch::nn::Conv2d;
using torch::nn::Conv2dOptions;
using torch::nn::Linear;

std::string to_string(Domain domain) {
  switch (domain) {
    case Domain::Syn: return "syn";
    case Domain::Real: return "real";
    case Domain::Clean: return "clean";
    case Domain::Interp: return "interp";
  }
  return "unknown";
}

Domain parse_domain(const std::string& name) {
  if (name == "syn") return Domain::Syn;
  if (name == "real") return Domain::Real;
  if (name == "clean") return Domain::Clean;
  if (name == "interp") return Domain::Interp;
  throw UsageError("unknown domain: " + name);
}

void ModelConfig::validate() const {
  const int64_t sizes[] = {base_filters,       content_channels,      num_content_resblocks,
                           style_channels,     latent_dim,            generator_resblocks,
                           adain_param_net_hidden, transform_hidden, discriminator_scales};
  for (int64_t v : sizes) {
    if (v <= 0) throw UsageError("model config sizes must be positive");
  }
  if (content_channels % 4 != 0) throw UsageError("content_channels must be divisible by 4");
  if (!(init_std > 0.0)) throw UsageError("init_std must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"base_filters", base_filters},
          {"content_channels", content_channels},
          {"num_content_resblocks", num_content_resblocks},
          {"style_channels", style_channels},
          {"latent_dim", latent_dim},
          {"generator_resblocks", generator_resblocks},
          {"adain_param_net_hidden", adain_param_net_hidden},
          {"transform_hidden", transform_hidden},
          {"discriminator_scales", discriminator_scales},
          {"init_std", init_std}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.base_filters = j.at("base_filters").get<int64_t>();
  c.content_channels = j.at("content_channels").get<int64_t>();
  c.num_content_resblocks = j.at("num_content_resblocks").get<int64_t>();
  c.style_channels = j.at("style_channels").get<int64_t>();
  c.latent_dim = j.at("latent_dim").get<int64_t>();
  c.generator_resblocks = j.at("generator_resblocks").get<int64_t>();
  c.adain_param_net_hidden = j.at("adain_param_net_hidden").get<int64_t>();
  c.transform_hidden = j.at("transform_hidden").get<int64_t>();
  c.discriminator_scales = j.at("discriminator_scales").get<int64_t>();
  c.init_std = j.at("init_std").get<double>();
  c.validate();
  return c;
}

std::string ModelConfig::hash() const {
  // FNV-1a, 64 bit.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int64_t ModelConfig::min_input_side() const {
  return std::max<int64_t>(16, int64_t{8} << (discriminator_scales - 1));
}

torch::Tensor channel_mean(const torch::Tensor& x) { return x.mean({-2, -1}, /*keepdim=*/true); }

torch::Tensor channel_std(const torch::Tensor& x, double eps) {
  return torch::sqrt(x.var({-2, -1}, /*unbiased=*/false, /*keepdim=*/true) + eps);
}

torch::Tensor instance_norm(const torch::Tensor& x, double eps) {
  if (x.dim() < 3) throw UsageError("instance_norm expects a (N×)C×H×W feature map");
  if (x.size(-1) * x.size(-2) < 2) throw UsageError("instance_norm needs at least two spatial positions");
  if (!(eps > 0.0)) throw UsageError("instance_norm eps must be positive");
  return (x - channel_mean(x)) / channel_std(x, eps);
}

torch::Tensor adain(const torch::Tensor& x, const AdaINParams& params, double eps) {
  const int64_t channels = x.size(-3);
  if (params.gamma.size(-1) != channels || params.beta.size(-1) != channels) {
    throw UsageError("AdaIN parameter length does not match channel count");
  }
  auto gamma = params.gamma.unsqueeze(-1).unsqueeze(-1);
  auto beta = params.beta.unsqueeze(-1).unsqueeze(-1);
  return gamma * instance_norm(x, eps) + beta;
}

namespace nets {

namespace {

Conv2d conv(int64_t in, int64_t out, int64_t kernel, int64_t stride, bool reflect = true) {
  auto opts = Conv2dOptions(in, out, kernel).stride(stride).padding((kernel - 1) / 2);
  if (kernel == 4) opts.padding(1);
  if (reflect) opts.padding_mode(torch::kReflect);
  return Conv2d(opts);
}

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int64_t channels)
    : conv1_(register_module("conv1", conv(channels, channels, 3, 1))),
      conv2_(register_module("conv2", conv(channels, channels, 3, 1))) {}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(instance_norm(conv1_->forward(x)));
  return x + instance_norm(conv2_->forward(y));
}

ContentEncoderImpl::ContentEncoderImpl(const ModelConfig& config) {
  const int64_t mid = config.content_channels / 2;
  stem_ = register_module("stem", conv(3, config.base_filters, 7, 1));
  down1_ = register_module("down1", conv(config.base_filters, mid, 4, 2));
  down2_ = register_module("down2", conv(mid, config.content_channels, 4, 2));
  for (int64_t i = 0; i < config.num_content_resblocks; ++i) blocks_->push_back(ResidualBlock(config.content_channels));
  register_module("blocks", blocks_);
}

torch::Tensor ContentEncoderImpl::forward(torch::Tensor x) {
  x = torch::relu(instance_norm(stem_->forward(x)));
  x = torch::relu(instance_norm(down1_->forward(x)));
  x = torch::relu(instance_norm(down2_->forward(x)));
  for (const auto& block : *blocks_) x = block->as<ResidualBlock>()->forward(x);
  return x;
}

StyleEncoderImpl::StyleEncoderImpl(const ModelConfig& config) {
  int64_t channels = config.base_filters;
  // Leaky units: plain ReLUs here die early and the style collapses to the bias.
  const auto leaky = torch::nn::LeakyReLUOptions().negative_slope(0.2);
  features_->push_back(conv(3, channels, 7, 1));
  features_->push_back(torch::nn::LeakyReLU(leaky));
  for (int i = 0; i < 4; ++i) {
    const int64_t next = std::min(channels * 2, config.style_channels);
    features_->push_back(conv(channels, next, 4, 2));
    features_->push_back(torch::nn::LeakyReLU(leaky));
    channels = next;
  }
  register_module("features", features_);
  head_ = register_module("head", Linear(channels, config.latent_dim));
}

torch::Tensor StyleEncoderImpl::forward(torch::Tensor x) {
  x = features_->forward(x);
  return head_->forward(x.mean({2, 3}));
}

LatentTransformImpl::LatentTransformImpl(const ModelConfig& config)
    : fc1_(register_module("fc1", Linear(config.latent_dim, config.transform_hidden))),
      fc2_(register_module("fc2", Linear(config.transform_hidden, config.transform_hidden))),
      out_(register_module("out", Linear(config.transform_hidden, config.latent_dim))) {}

torch::Tensor LatentTransformImpl::forward(const torch::Tensor& z) {
  auto h = torch::relu(fc1_->forward(z));
  h = torch::relu(fc2_->forward(h));
  return z + out_->forward(h);
}

void LatentTransformImpl::zero_output_layer() {
  torch::NoGradGuard guard;
  out_->weight.zero_();
  out_->bias.zero_();
}

GeneratorImpl::GeneratorImpl(const ModelConfig& config) : content_channels_(config.content_channels) {
  const int64_t c = config.content_channels;
  for (int64_t i = 0; i < config.generator_resblocks; ++i) {
    res_convs_->push_back(conv(c, c, 3, 1));
    res_convs_->push_back(conv(c, c, 3, 1));
    adain_channels_.push_back(c);
    adain_channels_.push_back(c);
  }
  register_module("res_convs", res_convs_);
  up1_ = register_module("up1", conv(c, c / 2, 5, 1));
  up2_ = register_module("up2", conv(c / 2, c / 4, 5, 1));
  out_ = register_module("out", conv(c / 4, 3, 7, 1));
  adain_channels_.push_back(c / 2);
  adain_channels_.push_back(c / 4);

  int64_t total = 0;
  for (int64_t ch : adain_channels_) total += 2 * ch;
  const int64_t hidden = config.adain_param_net_hidden;
  param_net_->push_back(Linear(config.latent_dim, hidden));
  param_net_->push_back(torch::nn::ReLU());
  param_net_->push_back(Linear(hidden, hidden));
  param_net_->push_back(torch::nn::ReLU());
  param_net_->push_back(Linear(hidden, total));
  register_module("param_net", param_net_);
}

std::vector<AdaINParams> GeneratorImpl::adain_params(const torch::Tensor& style) {
  auto raw = param_net_->forward(style);
  std::vector<AdaINParams> out;
  int64_t offset = 0;
  for (int64_t ch : adain_channels_) {
    // The network predicts the deviation of gamma from 1.
    out.push_back({1.0 + raw.narrow(1, offset, ch), raw.narrow(1, offset + ch, ch)});
    offset += 2 * ch;
  }
  return out;
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& content, const torch::Tensor& style) {
  if (content.dim() != 4 || content.size(1) != content_channels_) {
    throw UsageError("content latent channel count does not match the generator");
  }
  if (style.dim() != 2 || style.size(0) != content.size(0)) {
    throw UsageError("style batch does not match content batch");
  }
  const auto params = adain_params(style);
  size_t k = 0;
  auto x = content;
  for (size_t i = 0; i < res_convs_->size(); i += 2) {
    auto y = torch::relu(adain(res_convs_[i]->as<torch::nn::Conv2d>()->forward(x), params[k++]));
    y = adain(res_convs_[i + 1]->as<torch::nn::Conv2d>()->forward(y), params[k++]);
    x = x + y;
  }
  const auto up = F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest);
  x = torch::relu(adain(up1_->forward(F::interpolate(x, up)), params[k++]));
  x = torch::relu(adain(up2_->forward(F::interpolate(x, up)), params[k++]));
  return torch::sigmoid(out_->forward(x));
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const ModelConfig& config) {
  const int64_t bf = config.base_filters;
  const auto lrelu = torch::nn::LeakyReLUOptions().negative_slope(0.2);
  layers_->push_back(conv(3, bf, 4, 2, false));
  layers_->push_back(torch::nn::LeakyReLU(lrelu));
  layers_->push_back(conv(bf, 2 * bf, 4, 2, false));
  layers_->push_back(torch::nn::LeakyReLU(lrelu));
  layers_->push_back(conv(2 * bf, 4 * bf, 4, 2, false));
  layers_->push_back(torch::nn::LeakyReLU(lrelu));
  layers_->push_back(Conv2d(Conv2dOptions(4 * bf, 1, 1)));
  register_module("layers", layers_);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) { return layers_->forward(x); }

MultiScaleDiscriminatorImpl::MultiScaleDiscriminatorImpl(const ModelConfig& config) {
  for (int64_t i = 0; i < config.discriminator_scales; ++i) scales_->push_back(PatchDiscriminator(config));
  register_module("scales", scales_);
}

std::vector<torch::Tensor> MultiScaleDiscriminatorImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> out;
  auto input = x;
  const auto pool = F::AvgPool2dFuncOptions(3).stride(2).padding(1).count_include_pad(false);
  for (size_t i = 0; i < scales_->size(); ++i) {
    if (i > 0) input = F::avg_pool2d(input, pool);
    out.push_back(scales_[i]->as<PatchDiscriminator>()->forward(input));
  }
  return out;
}

}  // namespace nets

UiessModelImpl::UiessModelImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  content_encoder = register_module("content_encoder", nets::ContentEncoder(config_));
  style_encoder_syn = register_module("style_encoder_syn", nets::StyleEncoder(config_));
  style_encoder_real = register_module("style_encoder_real", nets::StyleEncoder(config_));
  transform = register_module("transform", nets::LatentTransform(config_));
  generator = register_module("generator", nets::Generator(config_));
  discriminator_syn = register_module("discriminator_syn", nets::MultiScaleDiscriminator(config_));
  discriminator_real = register_module("discriminator_real", nets::MultiScaleDiscriminator(config_));
  reset_parameters();
}

void UiessModelImpl::reset_parameters() {
  torch::NoGradGuard guard;
  for (auto& item : named_parameters()) {
    const auto& name = item.key();
    auto& param = item.value();
    if (name.ends_with(".bias")) {
      param.zero_();
    } else {
      param.normal_(0.0, config_.init_std);
    }
  }
  transform->zero_output_layer();
}

void UiessModelImpl::check_images(const torch::Tensor& images, int64_t min_side) const {
  if (images.dim() != 4 || images.size(1) != 3) throw UsageError("expected an N×3×H×W image batch");
  if (images.size(2) < min_side || images.size(3) < min_side) {
    throw UsageError("image smaller than the minimum side of " + std::to_string(min_side));
  }
}

ContentLatent UiessModelImpl::encode_content(const torch::Tensor& images) {
  check_images(images, 8);
  if (images.size(2) % ModelConfig::kContentStride != 0 || images.size(3) % ModelConfig::kContentStride != 0) {
    throw UsageError("content encoder needs height and width divisible by 4");
  }
  return {content_encoder->forward(images)};
}

StyleLatent UiessModelImpl::encode_style(const torch::Tensor& images, Domain domain) {
  check_images(images, 16);
  switch (domain) {
    case Domain::Syn: return {style_encoder_syn->forward(images), Domain::Syn};
    case Domain::Real: return {style_encoder_real->forward(images), Domain::Real};
    default: throw UsageError("no style encoder exists for domain " + to_string(domain));
  }
}

StyleLatent UiessModelImpl::transform_style(const StyleLatent& style) {
  if (style.domain != Domain::Syn && style.domain != Domain::Real) {
    throw UsageError("latent transform only accepts syn or real styles");
  }
  if (style.vector.size(-1) != config_.latent_dim) throw UsageError("style vector has the wrong length");
  return {transform->forward(style.vector), Domain::Clean};
}

torch::Tensor UiessModelImpl::decode(const ContentLatent& content, const StyleLatent& style) {
  if (style.vector.dim() != 2 || style.vector.size(1) != config_.latent_dim) {
    throw UsageError("style vector has the wrong length");
  }
  return generator->forward(content.features, style.vector);
}

std::vector<torch::Tensor> UiessModelImpl::discriminate(const torch::Tensor& images, Domain domain) {
  check_images(images, int64_t{8} << (config_.discriminator_scales - 1));
  switch (domain) {
    case Domain::Syn: return discriminator_syn->forward(images);
    case Domain::Real: return discriminator_real->forward(images);
    default: throw UsageError("no discriminator exists for domain " + to_string(domain));
  }
}

std::vector<torch::Tensor> UiessModelImpl::generator_parameters() const {
  std::vector<torch::Tensor> out;
  auto append = [&out](const torch::nn::Module& m) {
    for (const auto& p : m.parameters()) out.push_back(p);
  };
  append(*content_encoder);
  append(*style_encoder_syn);
  append(*style_encoder_real);
  append(*transform);
  append(*generator);
  return out;
}

std::vector<torch::Tensor> UiessModelImpl::discriminator_parameters() const {
  auto out = discriminator_syn->parameters();
  for (const auto& p : discriminator_real->parameters()) out.push_back(p);
  return out;
}

ModelSummary UiessModelImpl::summary() const {
  ModelSummary s;
  for (const auto& item : named_children()) {
    const auto& name = item.key();
    const auto& module = item.value();
    int64_t n = 0;
    for (const auto& p : module->parameters()) n += p.numel();
    s.parameters_per_component[name] = n;
    s.total += n;
    if (name.starts_with("discriminator")) {
      s.discriminator_side += n;
    } else {
      s.generator_side += n;
    }
  }
  return s;
}

}  // namespace uiess
