#include "uiess/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "uiess/errors.hpp"
#include "uiess/kvfile.hpp"

namespace uiess {

namespace {

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss term: ") + name);
}

double value(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

torch::Tensor zero_like_scalar(const torch::Tensor& ref) { return torch::zeros({}, ref.options()); }

std::string gan_objective_name(GanObjective o) { return o == GanObjective::LeastSquares ? "lsgan" : "log"; }

std::vector<std::pair<std::string, torch::Tensor>> params_where(const UiessModelImpl& model, bool discriminator) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : model.named_parameters()) {
    if (item.key().starts_with("discriminator") == discriminator) out.emplace_back(item.key(), item.value());
  }
  return out;
}

void store_adam(Checkpoint& ckpt, const char* prefix, torch::optim::Adam& opt,
                const std::vector<std::pair<std::string, torch::Tensor>>& params) {
  auto& state = opt.state();
  nlohmann::json steps = nlohmann::json::object();
  for (const auto& [name, p] : params) {
    auto it = state.find(p.unsafeGetTensorImpl());
    if (it == state.end()) continue;
    auto& s = static_cast<torch::optim::AdamParamState&>(*it->second);
    steps[name] = s.step();
    ckpt.add(std::string(prefix) + name + ".exp_avg", s.exp_avg());
    ckpt.add(std::string(prefix) + name + ".exp_avg_sq", s.exp_avg_sq());
  }
  ckpt.meta["optimizer_steps"][prefix] = steps;
}

void restore_adam(const Checkpoint& ckpt, const char* prefix, torch::optim::Adam& opt,
                  const std::vector<std::pair<std::string, torch::Tensor>>& params) {
  const auto& steps = ckpt.meta.at("optimizer_steps").at(prefix);
  auto& state = opt.state();
  for (const auto& [name, p] : params) {
    if (!steps.contains(name)) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(steps.at(name).get<int64_t>());
    s->exp_avg(ckpt.tensor(std::string(prefix) + name + ".exp_avg").clone());
    s->exp_avg_sq(ckpt.tensor(std::string(prefix) + name + ".exp_avg_sq").clone());
    state[p.unsafeGetTensorImpl()] = std::move(s);
  }
}

torch::Tensor load_train_image(const DatasetManifest& m, const std::filesystem::path& rel) {
  const auto path = m.resolve(rel);
  if (!std::filesystem::exists(path)) throw DataError("missing dataset file: " + path.string());
  return read_png(path).batch().squeeze(0);
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw UsageError("steps must be non-negative");
  if (patch_size <= 0 || patch_size % 4 != 0) throw UsageError("patch_size must be a positive multiple of 4");
  if (batch_size <= 0) throw UsageError("batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw UsageError("learning_rate must be positive");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
    throw UsageError("adam betas must lie in [0, 1)");
  }
  if (checkpoint_every <= 0) throw UsageError("checkpoint_every must be positive");
  weights.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"steps", steps},
          {"patch_size", patch_size},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"seed", seed},
          {"lambda_self", weights.lambda_self},
          {"lambda_latent", weights.lambda_latent},
          {"lambda_tv", weights.lambda_tv},
          {"lambda_per", weights.lambda_per},
          {"lambda_iq", weights.lambda_iq},
          {"disable_cycle", disable_cycle},
          {"disable_l1", disable_l1},
          {"disable_ssim", disable_ssim},
          {"disable_perceptual", disable_perceptual},
          {"disable_gan", disable_gan},
          {"gan_objective", gan_objective_name(gan_objective)},
          {"hflip", hflip},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.steps = j.at("steps").get<int64_t>();
  c.patch_size = j.at("patch_size").get<int64_t>();
  c.batch_size = j.at("batch_size").get<int64_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.weights.lambda_self = j.at("lambda_self").get<double>();
  c.weights.lambda_latent = j.at("lambda_latent").get<double>();
  c.weights.lambda_tv = j.at("lambda_tv").get<double>();
  c.weights.lambda_per = j.at("lambda_per").get<double>();
  c.weights.lambda_iq = j.at("lambda_iq").get<double>();
  c.disable_cycle = j.at("disable_cycle").get<bool>();
  c.disable_l1 = j.at("disable_l1").get<bool>();
  c.disable_ssim = j.at("disable_ssim").get<bool>();
  c.disable_perceptual = j.at("disable_perceptual").get<bool>();
  c.disable_gan = j.at("disable_gan").get<bool>();
  c.gan_objective = j.at("gan_objective").get<std::string>() == "log" ? GanObjective::Log : GanObjective::LeastSquares;
  c.hflip = j.at("hflip").get<bool>();
  c.checkpoint_every = j.at("checkpoint_every").get<int64_t>();
  c.validate();
  return c;
}

std::vector<std::pair<std::string, torch::Tensor>> StepArtifacts::images() const {
  return {{"syn_rec", syn_rec},         {"real_rec", real_rec},         {"syn_to_real", syn_to_real},
          {"real_to_syn", real_to_syn}, {"syn_cycle", syn_cycle},       {"real_cycle", real_cycle},
          {"syn_enhanced", syn_enhanced}, {"pseudo_enhanced", pseudo_enhanced}, {"real_enhanced", real_enhanced}};
}

StepArtifacts forward_pass(UiessModelImpl& model, const torch::Tensor& syn, const torch::Tensor& real,
                           const torch::Tensor& clean) {
  if (syn.sizes() != real.sizes() || syn.sizes() != clean.sizes()) {
    throw UsageError("forward_pass: I_S, I_R and I_Y must share one shape");
  }
  StepArtifacts a;
  a.content_syn = model.encode_content(syn);
  a.content_real = model.encode_content(real);
  a.style_syn = model.encode_style(syn, Domain::Syn);
  a.style_real = model.encode_style(real, Domain::Real);
  a.clean_from_syn = model.transform_style(a.style_syn);
  a.clean_from_real = model.transform_style(a.style_real);

  a.syn_rec = model.decode(a.content_syn, a.style_syn);
  a.real_rec = model.decode(a.content_real, a.style_real);
  a.syn_to_real = model.decode(a.content_syn, a.style_real);
  a.real_to_syn = model.decode(a.content_real, a.style_syn);

  a.content_pseudo = model.encode_content(a.syn_to_real);
  const ContentLatent content_back = model.encode_content(a.real_to_syn);
  a.syn_cycle = model.decode(a.content_pseudo, a.style_syn);
  a.real_cycle = model.decode(content_back, a.style_real);

  a.syn_enhanced = model.decode(a.content_syn, a.clean_from_syn);
  a.real_enhanced = model.decode(a.content_real, a.clean_from_real);

  // Pseudo real pair: restyle I_S into the real domain, then enhance it like a real image.
  a.style_pseudo = model.encode_style(a.syn_to_real, Domain::Real);
  a.clean_from_pseudo = model.transform_style(a.style_pseudo);
  a.pseudo_enhanced = model.decode(a.content_pseudo, a.clean_from_pseudo);
  return a;
}

GeneratorLosses generator_losses(UiessModelImpl& model, const StepArtifacts& a, const Batch& b,
                                 const TrainConfig& cfg, const PerceptualExtractor& perceptual) {
  GeneratorLosses l;
  const auto zero = zero_like_scalar(b.syn);
  l.self = loss_self(b.syn, a.syn_rec, b.real, a.real_rec);
  l.cyc = cfg.disable_cycle ? zero : loss_cycle(b.syn, b.real, a.syn_cycle, a.real_cycle);
  if (cfg.disable_gan) {
    l.gan_g = zero;
  } else {
    l.gan_g = loss_gan({}, model.discriminate(a.syn_to_real, Domain::Real), GanSide::Generator, cfg.gan_objective) +
              loss_gan({}, model.discriminate(a.real_to_syn, Domain::Syn), GanSide::Generator, cfg.gan_objective);
  }
  // Both enhanced synthetic outputs are supervised by the clean ground truth I_Y.
  l.pixel = cfg.disable_l1 ? zero : loss_pixel(a.syn_enhanced, a.pseudo_enhanced, b.clean);
  l.ssim = cfg.disable_ssim ? zero : loss_ssim_pair(a.syn_enhanced, a.pseudo_enhanced, b.clean);
  l.per = cfg.disable_perceptual ? zero : loss_perceptual(a.syn_enhanced, a.pseudo_enhanced, b.clean, perceptual);
  l.tv = loss_tv(a.syn_enhanced) + loss_tv(a.real_enhanced);
  l.latent = loss_latent(a.clean_from_syn, a.clean_from_real);
  return l;
}

Trainer::Trainer(const ModelConfig& model_config, const TrainConfig& config)
    : Trainer([&] {
        config.validate();
        torch::manual_seed(config.seed);
        return UiessModel(model_config);
      }(),
              config) {}

Trainer::Trainer(UiessModel model, const TrainConfig& config)
    : config_(config), model_(std::move(model)), perceptual_(0), rng_(derive_seed(config.seed, 0x7A1)) {
  config_.validate();
  gen_params_ = params_where(*model_, false);
  disc_params_ = params_where(*model_, true);
  build_optimizers();
}

void Trainer::build_optimizers() {
  auto opts = torch::optim::AdamOptions(config_.learning_rate).betas({config_.adam_beta1, config_.adam_beta2});
  std::vector<torch::Tensor> g, d;
  for (const auto& [n, p] : gen_params_) g.push_back(p);
  for (const auto& [n, p] : disc_params_) d.push_back(p);
  gen_opt_ = std::make_unique<torch::optim::Adam>(g, opts);
  disc_opt_ = std::make_unique<torch::optim::Adam>(d, opts);
}

Trainer Trainer::resume(const std::filesystem::path& checkpoint, const TrainConfig& config) {
  const Checkpoint ckpt = Checkpoint::load(checkpoint);
  if (!ckpt.meta.contains("step") || !ckpt.meta.contains("rng_state")) {
    throw DataError("checkpoint lacks trainer state: " + checkpoint.string());
  }
  Trainer t(restore_model(ckpt), config);
  t.step_ = ckpt.meta.at("step").get<int64_t>();
  std::istringstream rng_in(ckpt.meta.at("rng_state").get<std::string>());
  rng_in >> t.rng_;
  if (!rng_in) throw DataError("checkpoint has a malformed RNG state");
  restore_adam(ckpt, "gen.", *t.gen_opt_, t.gen_params_);
  restore_adam(ckpt, "disc.", *t.disc_opt_, t.disc_params_);
  return t;
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta["format"] = "uiess-checkpoint";
  ckpt.meta["train_config"] = config_.to_json();
  ckpt.meta["step"] = step_;
  std::ostringstream rng_out;
  rng_out << rng_;
  ckpt.meta["rng_state"] = rng_out.str();
  store_model(ckpt, *model_);
  store_adam(ckpt, "gen.", *gen_opt_, gen_params_);
  store_adam(ckpt, "disc.", *disc_opt_, disc_params_);
  return ckpt;
}

void Trainer::save(const std::filesystem::path& path) const { to_checkpoint().save(path); }

Batch Trainer::sample_batch(const std::vector<torch::Tensor>& syn, const std::vector<torch::Tensor>& clean,
                            const std::vector<torch::Tensor>& real) {
  if (syn.empty() || real.empty() || syn.size() != clean.size()) throw DataError("empty or inconsistent training set");
  const int64_t p = config_.patch_size;
  auto crop = [&](const torch::Tensor& img, int64_t y, int64_t x) { return img.narrow(1, y, p).narrow(2, x, p); };
  auto offset = [&](int64_t side) {
    if (side < p) throw DataError("training images are smaller than the patch size");
    return static_cast<int64_t>(rng_() % static_cast<uint64_t>(side - p + 1));
  };
  std::vector<torch::Tensor> s, c, r;
  for (int64_t b = 0; b < config_.batch_size; ++b) {
    const auto i = static_cast<size_t>(rng_() % syn.size());
    const int64_t y = offset(syn[i].size(1)), x = offset(syn[i].size(2));
    auto ps = crop(syn[i], y, x), pc = crop(clean[i], y, x);
    const auto j = static_cast<size_t>(rng_() % real.size());
    const int64_t ry = offset(real[j].size(1)), rx = offset(real[j].size(2));
    auto pr = crop(real[j], ry, rx);
    if (config_.hflip) {
      if (rng_() & 1) {
        ps = ps.flip({2});
        pc = pc.flip({2});
      }
      if (rng_() & 1) pr = pr.flip({2});
    }
    s.push_back(ps);
    c.push_back(pc);
    r.push_back(pr);
  }
  return {torch::stack(s).contiguous(), torch::stack(c).contiguous(), torch::stack(r).contiguous()};
}

LossReport Trainer::train_step(const Batch& batch) {
  model_->train();
  const StepArtifacts art = forward_pass(*model_, batch.syn, batch.real, batch.clean);

  double gan_d = 0.0;
  if (!config_.disable_gan) {
    const auto fake_real = art.syn_to_real.detach();
    const auto fake_syn = art.real_to_syn.detach();
    auto d_loss = loss_gan(model_->discriminate(batch.real, Domain::Real), model_->discriminate(fake_real, Domain::Real),
                           GanSide::Discriminator, config_.gan_objective) +
                  loss_gan(model_->discriminate(batch.syn, Domain::Syn), model_->discriminate(fake_syn, Domain::Syn),
                           GanSide::Discriminator, config_.gan_objective);
    gan_d = d_loss.item<double>();
    require_finite(gan_d, "gan_d");
    disc_opt_->zero_grad();
    d_loss.backward();
    disc_opt_->step();
  }

  const GeneratorLosses l = generator_losses(*model_, art, batch, config_, perceptual_);
  LossTerms terms;
  terms.cyc = value(l.cyc);
  terms.self = value(l.self);
  terms.gan_g = value(l.gan_g);
  terms.gan_d = gan_d;
  terms.pixel = value(l.pixel);
  terms.ssim = value(l.ssim);
  terms.per = value(l.per);
  terms.tv = value(l.tv);
  terms.latent = value(l.latent);
  const std::pair<const char*, double> named[] = {{"cyc", terms.cyc},     {"self", terms.self}, {"gan_g", terms.gan_g},
                                                  {"pixel", terms.pixel}, {"ssim", terms.ssim}, {"per", terms.per},
                                                  {"tv", terms.tv},       {"latent", terms.latent}};
  for (const auto& [name, v] : named) require_finite(v, name);

  const auto& w = config_.weights;
  auto total = l.gan_g + w.lambda_self * l.self + l.cyc + w.lambda_latent * l.latent + w.lambda_tv * l.tv +
               w.lambda_per * l.per + w.lambda_iq * (l.ssim + l.pixel);
  gen_opt_->zero_grad();
  total.backward();
  gen_opt_->step();
  ++step_;
  return aggregate(terms, w);
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, int64_t step) {
  char name[64];
  std::snprintf(name, sizeof(name), "checkpoint_%06lld.ckpt", static_cast<long long>(step));
  return out_dir / name;
}

std::filesystem::path train(const TrainConfig& config, const ModelConfig& model_config,
                            const DatasetManifest& manifest, const std::filesystem::path& out_dir,
                            const TrainOptions& options) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<torch::Tensor> syn, clean, real;
  for (const auto& s : manifest.split(Split::Train)) {
    syn.push_back(load_train_image(manifest, s.syn));
    clean.push_back(load_train_image(manifest, s.clean));
    real.push_back(load_train_image(manifest, s.real));
  }
  if (syn.empty()) throw DataError("dataset has no training samples");

  Trainer trainer = options.resume_from ? Trainer::resume(*options.resume_from, config)
                                        : Trainer(model_config, config);

  nlohmann::json echo{{"train_config", config.to_json()},
                      {"model_config", trainer.model()->config().to_json()},
                      {"dataset", manifest.root.string()}};
  write_file_atomic(out_dir / "train_config.json", echo.dump(2) + "\n");

  const auto log_path = out_dir / kLossLogName;
  const bool fresh_log = !std::filesystem::exists(log_path);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw DataError("cannot open " + log_path.string());
  if (fresh_log) {
    log << "step";
    for (const auto& c : LossReport::csv_columns()) log << "," << c;
    log << "\n";
  }

  std::filesystem::path last;
  while (trainer.step() < config.steps) {
    const Batch batch = trainer.sample_batch(syn, clean, real);
    const LossReport rep = trainer.train_step(batch);
    log << trainer.step();
    for (double v : rep.csv_values()) log << "," << format_double(v);
    log << "\n";
    log.flush();
    const bool keep_going = !options.on_step || options.on_step(trainer.step(), rep);
    if (trainer.step() % config.checkpoint_every == 0 || trainer.step() == config.steps || !keep_going) {
      last = checkpoint_path(out_dir, trainer.step());
      trainer.save(last);
    }
    if (!keep_going) break;
  }
  if (last.empty()) {
    last = checkpoint_path(out_dir, trainer.step());
    trainer.save(last);
  }
  return last;
}

std::vector<LossLogRow> read_loss_log(const std::filesystem::path& csv) {
  std::istringstream in(read_file(csv));
  std::string line;
  std::getline(in, line);
  std::vector<LossLogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> vals;
    std::getline(row, cell, ',');
    LossLogRow r;
    r.step = std::stoll(cell);
    while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != LossReport::csv_columns().size()) throw DataError("malformed loss log row");
    auto& t = r.report.terms;
    t.cyc = vals[0], t.self = vals[1], t.gan_g = vals[2], t.gan_d = vals[3], t.pixel = vals[4];
    t.ssim = vals[5], t.per = vals[6], t.tv = vals[7], t.latent = vals[8];
    r.report.iq = vals[9], r.report.tran = vals[10], r.report.en = vals[11], r.report.total = vals[12];
    rows.push_back(r);
  }
  return rows;
}

}  // namespace uiess
