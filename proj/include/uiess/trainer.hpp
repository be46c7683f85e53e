#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "uiess/checkpoint.hpp"
#include "uiess/datasynth.hpp"
#include "uiess/losses.hpp"
#include "uiess/model.hpp"

namespace uiess {

struct TrainConfig {
  int64_t steps = 2000;
  int64_t patch_size = 64;
  int64_t batch_size = 1;
  double learning_rate = 5e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  uint64_t seed = 0;
  LossWeights weights;

  // Ablation switches: each zeroes one term of the generator objective.
  bool disable_cycle = false;
  bool disable_l1 = false;
  bool disable_ssim = false;
  bool disable_perceptual = false;
  bool disable_gan = false;
  GanObjective gan_objective = GanObjective::LeastSquares;

  bool hflip = false;
  int64_t checkpoint_every = 500;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// One (I_S, I_Y, I_R) minibatch, each N×3×P×P float32. I_Y is the clean counterpart of I_S;
/// I_R is unpaired.
struct Batch {
  torch::Tensor syn;
  torch::Tensor clean;
  torch::Tensor real;
};

/// Every intermediate image and latent of one forward pass.
struct StepArtifacts {
  ContentLatent content_syn, content_real;
  StyleLatent style_syn, style_real;
  StyleLatent clean_from_syn, clean_from_real;

  torch::Tensor syn_rec;       // I_{x->x}
  torch::Tensor real_rec;      // I_{y->y}
  torch::Tensor syn_to_real;   // I_{x->y}, the pseudo real image I_{S->R}
  torch::Tensor real_to_syn;   // I_{y->x}
  torch::Tensor syn_cycle;     // I_{x->y->x}
  torch::Tensor real_cycle;    // I_{y->x->y}
  torch::Tensor syn_enhanced;  // I_{S->C}
  torch::Tensor pseudo_enhanced;  // I_{S->R->C}
  torch::Tensor real_enhanced;    // I_{R->C}

  ContentLatent content_pseudo;  // E^C(I_{S->R})
  StyleLatent style_pseudo;      // E^S_R(I_{S->R})
  StyleLatent clean_from_pseudo;

  /// (name, image) for the nine images above, in declaration order.
  std::vector<std::pair<std::string, torch::Tensor>> images() const;
};

StepArtifacts forward_pass(UiessModelImpl& model, const torch::Tensor& syn, const torch::Tensor& real,
                           const torch::Tensor& clean);

/// Raw loss terms of the generator objective as tensors (zeroed where ablated).
struct GeneratorLosses {
  torch::Tensor cyc, self, gan_g, pixel, ssim, per, tv, latent;
};
GeneratorLosses generator_losses(UiessModelImpl& model, const StepArtifacts& art, const Batch& batch,
                                 const TrainConfig& config, const PerceptualExtractor& perceptual);

/// Owns the model, both optimizers, the sampling RNG and the step counter.
class Trainer {
 public:
  Trainer(const ModelConfig& model_config, const TrainConfig& config);
  /// Restores model, optimizer moments, step and RNG from a checkpoint; `config` supplies the run settings.
  static Trainer resume(const std::filesystem::path& checkpoint, const TrainConfig& config);

  /// One discriminator update on detached fakes, then one update of encoders, generator and transform.
  /// Throws NumericError naming the first non-finite term; parameters are untouched in that case.
  LossReport train_step(const Batch& batch);

  /// Draws a batch with seeded uniform crops; I_R indices are independent of (I_S, I_Y).
  Batch sample_batch(const std::vector<torch::Tensor>& syn, const std::vector<torch::Tensor>& clean,
                     const std::vector<torch::Tensor>& real);

  Checkpoint to_checkpoint() const;
  void save(const std::filesystem::path& path) const;

  UiessModel& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  int64_t step() const { return step_; }
  Rng& rng() { return rng_; }

 private:
  Trainer(UiessModel model, const TrainConfig& config);
  void build_optimizers();

  TrainConfig config_;
  UiessModel model_;
  std::unique_ptr<torch::optim::Adam> gen_opt_;
  std::unique_ptr<torch::optim::Adam> disc_opt_;
  std::vector<std::pair<std::string, torch::Tensor>> gen_params_;
  std::vector<std::pair<std::string, torch::Tensor>> disc_params_;
  PerceptualExtractor perceptual_;
  Rng rng_;
  int64_t step_ = 0;
};

struct TrainOptions {
  std::optional<std::filesystem::path> resume_from;
  /// Called after each logged step; return false to stop early (a checkpoint is still written).
  std::function<bool(int64_t, const LossReport&)> on_step;
};

inline constexpr const char* kLossLogName = "loss_log.csv";

/// Trains on the manifest's train split. Writes loss_log.csv (one row per step), periodic
/// checkpoints `checkpoint_<step>.ckpt`, a final checkpoint and `train_config.json`.
/// Returns the final checkpoint path.
std::filesystem::path train(const TrainConfig& config, const ModelConfig& model_config,
                            const DatasetManifest& manifest, const std::filesystem::path& out_dir,
                            const TrainOptions& options = {});

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, int64_t step);

/// Parsed loss log rows: step followed by LossReport::csv_values().
struct LossLogRow {
  int64_t step = 0;
  LossReport report;
};
std::vector<LossLogRow> read_loss_log(const std::filesystem::path& csv);

}  // namespace uiess
