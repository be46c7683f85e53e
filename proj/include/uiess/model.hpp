#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace uiess {

/// Style domain tag. Clean styles only arise from the latent transform; Interp marks
/// a partially manipulated style (0 < alpha < 1 or extrapolated).
enum class Domain { Syn, Real, Clean, Interp };

std::string to_string(Domain domain);
Domain parse_domain(const std::string& name);

inline constexpr double kNormEps = 1e-5;

struct ModelConfig {
  int64_t base_filters = 16;
  int64_t content_channels = 64;
  int64_t num_content_resblocks = 3;
  int64_t style_channels = 64;
  int64_t latent_dim = 8;
  int64_t generator_resblocks = 3;
  int64_t adain_param_net_hidden = 128;
  int64_t transform_hidden = 32;
  int64_t discriminator_scales = 2;
  double init_std = 0.02;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  /// Stable 16-hex-digit digest of the canonical JSON form.
  std::string hash() const;

  /// Total spatial downsampling of the content encoder.
  static constexpr int64_t kContentStride = 4;
  /// Smallest square input accepted by the style encoder and discriminator.
  int64_t min_input_side() const;

  bool operator==(const ModelConfig&) const = default;
};

/// N×C×H/4×W/4 content features.
struct ContentLatent {
  torch::Tensor features;
};

/// N×d style vectors plus the domain they belong to.
struct StyleLatent {
  torch::Tensor vector;
  Domain domain = Domain::Syn;
};

struct AdaINParams {
  torch::Tensor gamma;  // N×C or C
  torch::Tensor beta;   // N×C or C
};

// Per-channel statistics over the spatial dims of an (N×)C×H×W map, population variance.
torch::Tensor channel_mean(const torch::Tensor& x);
/// sqrt(var + eps); the same quantity instance_norm divides by.
torch::Tensor channel_std(const torch::Tensor& x, double eps = kNormEps);

torch::Tensor instance_norm(const torch::Tensor& x, double eps = kNormEps);
torch::Tensor adain(const torch::Tensor& x, const AdaINParams& params, double eps = kNormEps);

namespace nets {

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Conv-IN-ReLU stem, two stride-2 stages and IN residual blocks.
class ContentEncoderImpl : public torch::nn::Module {
 public:
  explicit ContentEncoderImpl(const ModelConfig& config);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::Conv2d stem_{nullptr}, down1_{nullptr}, down2_{nullptr};
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(ContentEncoder);

/// Conv-ReLU stages without normalization, global average pooling, linear map to d.
class StyleEncoderImpl : public torch::nn::Module {
 public:
  explicit StyleEncoderImpl(const ModelConfig& config);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::Sequential features_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(StyleEncoder);

/// z + f(z), f a two-hidden-layer MLP whose output layer starts at zero.
class LatentTransformImpl : public torch::nn::Module {
 public:
  explicit LatentTransformImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& z);
  void zero_output_layer();

 private:
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr}, out_{nullptr};
};
TORCH_MODULE(LatentTransform);

/// AdaIN residual blocks, two upsampling stages, sigmoid output. One MLP maps the style
/// vector to every AdaIN (gamma, beta) pair.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& content, const torch::Tensor& style);

  /// Channel count of every AdaIN layer, in application order.
  const std::vector<int64_t>& adain_channels() const { return adain_channels_; }
  std::vector<AdaINParams> adain_params(const torch::Tensor& style);

 private:
  int64_t content_channels_;
  std::vector<int64_t> adain_channels_;
  torch::nn::Sequential param_net_;
  torch::nn::ModuleList res_convs_;
  torch::nn::Conv2d up1_{nullptr}, up2_{nullptr}, out_{nullptr};
};
TORCH_MODULE(Generator);

class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential layers_;
};
TORCH_MODULE(PatchDiscriminator);

/// One patch discriminator per scale; scale k sees the input average-pooled k times.
class MultiScaleDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit MultiScaleDiscriminatorImpl(const ModelConfig& config);
  std::vector<torch::Tensor> forward(const torch::Tensor& x);

 private:
  torch::nn::ModuleList scales_;
};
TORCH_MODULE(MultiScaleDiscriminator);

}  // namespace nets

struct ModelSummary {
  std::map<std::string, int64_t> parameters_per_component;
  int64_t total = 0;
  int64_t generator_side = 0;
  int64_t discriminator_side = 0;
};

/// All learnable components. Inputs are N×3×H×W float tensors in [0, 1].
class UiessModelImpl : public torch::nn::Module {
 public:
  explicit UiessModelImpl(const ModelConfig& config);

  ContentLatent encode_content(const torch::Tensor& images);
  /// Throws for Domain::Clean: clean styles are only reachable through transform_style.
  StyleLatent encode_style(const torch::Tensor& images, Domain domain);
  /// Degraded (Syn/Real) style to Clean style.
  StyleLatent transform_style(const StyleLatent& style);
  torch::Tensor decode(const ContentLatent& content, const StyleLatent& style);
  /// Score maps of the discriminator guarding `domain` (Syn or Real), finest scale first.
  std::vector<torch::Tensor> discriminate(const torch::Tensor& images, Domain domain);

  std::vector<torch::Tensor> generator_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const;
  ModelSummary summary() const;
  const ModelConfig& config() const { return config_; }

  /// Re-draws every weight from N(0, init_std), zero biases, zero transform output layer.
  void reset_parameters();

  nets::ContentEncoder content_encoder{nullptr};
  nets::StyleEncoder style_encoder_syn{nullptr};
  nets::StyleEncoder style_encoder_real{nullptr};
  nets::LatentTransform transform{nullptr};
  nets::Generator generator{nullptr};
  nets::MultiScaleDiscriminator discriminator_syn{nullptr};
  nets::MultiScaleDiscriminator discriminator_real{nullptr};

 private:
  void check_images(const torch::Tensor& images, int64_t min_side) const;
  ModelConfig config_;
};
TORCH_MODULE(UiessModel);

}  // namespace uiess
