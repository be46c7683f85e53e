#include "uiess/cli.hpp"

#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "uiess/checkpoint.hpp"
#include "uiess/datasynth.hpp"
#include "uiess/errors.hpp"
#include "uiess/inference.hpp"
#include "uiess/kvfile.hpp"
#include "uiess/latentlab.hpp"
#include "uiess/metrics.hpp"
#include "uiess/serve.hpp"
#include "uiess/trainer.hpp"

namespace uiess {

namespace {

namespace fs = std::filesystem;

struct SynthArgs {
  uint64_t seed = 0;
  int64_t count = 64;
  DatasetOptions options;
  std::string out;
};

struct TrainArgs {
  std::string data, out, resume;
  TrainConfig train;
  ModelConfig model;
  std::string gan = "lsgan";
};

struct EnhanceArgs {
  std::string checkpoint, input, out, domain = "real";
  double alpha = 1.0;
};

struct TranslateArgs {
  std::string checkpoint, input, ref, out, ref_domain = "real";
};

struct InterpolateArgs {
  std::string checkpoint, input, out, domain = "real";
  std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
};

struct EvalArgs {
  std::string metrics = "psnr,ssim", pairs, dir, out;
};

struct LatentsArgs {
  std::string checkpoint, data, out, split = "all";
  uint64_t seed = 0;
};

struct ServeArgs {
  std::string checkpoint;
  ServeOptions options;
};

Domain degraded_domain(const std::string& name) {
  const Domain d = parse_domain(name);
  if (d != Domain::Syn && d != Domain::Real) throw UsageError("domain must be syn or real");
  return d;
}

/// Writes the options of the global scope and the selected command, defaults included, in the config-file format.
void echo_config(const CLI::App& app, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto subs = app.get_subcommands();
  const std::string prefix = subs.empty() ? std::string() : subs.front()->get_name() + ".";
  std::istringstream in(app.config_to_str(true, false));
  std::string out, line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    const auto dot = line.find('.');
    const bool global = dot == std::string::npos || dot > eq;
    if (line.ends_with("=\"\"")) continue;  // unset
    if (global || (!prefix.empty() && line.starts_with(prefix))) out += line + "\n";
  }
  write_file_atomic(path, out);
}

fs::path echo_path_for_file(const fs::path& out) { return fs::path(out.string() + ".run.ini"); }

std::string alpha_label(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", alpha);
  return buf;
}

void add_model_options(CLI::App* sub, ModelConfig& m) {
  sub->add_option("--base-filters", m.base_filters, "Channels after the content stem")->capture_default_str();
  sub->add_option("--content-channels", m.content_channels, "Content latent channels")->capture_default_str();
  sub->add_option("--content-resblocks", m.num_content_resblocks)->capture_default_str();
  sub->add_option("--generator-resblocks", m.generator_resblocks)->capture_default_str();
  sub->add_option("--style-channels", m.style_channels)->capture_default_str();
  sub->add_option("--latent-dim", m.latent_dim, "Style vector length d")->capture_default_str();
  sub->add_option("--adain-hidden", m.adain_param_net_hidden)->capture_default_str();
  sub->add_option("--transform-hidden", m.transform_hidden)->capture_default_str();
  sub->add_option("--discriminator-scales", m.discriminator_scales)->capture_default_str();
  sub->add_option("--init-std", m.init_std)->capture_default_str();
}

void add_train_options(CLI::App* sub, TrainArgs& a) {
  auto& t = a.train;
  sub->add_option("--data", a.data, "Dataset directory or manifest")->required();
  sub->add_option("--out", a.out, "Run directory")->required();
  sub->add_option("--resume", a.resume, "Checkpoint to resume from");
  sub->add_option("--steps", t.steps)->capture_default_str();
  sub->add_option("--patch", t.patch_size)->capture_default_str();
  sub->add_option("--batch", t.batch_size)->capture_default_str();
  sub->add_option("--lr", t.learning_rate)->capture_default_str();
  sub->add_option("--beta1", t.adam_beta1)->capture_default_str();
  sub->add_option("--beta2", t.adam_beta2)->capture_default_str();
  sub->add_option("--seed", t.seed)->capture_default_str();
  sub->add_option("--lambda-self", t.weights.lambda_self)->capture_default_str();
  sub->add_option("--lambda-latent", t.weights.lambda_latent)->capture_default_str();
  sub->add_option("--lambda-tv", t.weights.lambda_tv)->capture_default_str();
  sub->add_option("--lambda-per", t.weights.lambda_per)->capture_default_str();
  sub->add_option("--lambda-iq", t.weights.lambda_iq)->capture_default_str();
  sub->add_flag("--disable-cycle", t.disable_cycle);
  sub->add_flag("--disable-l1", t.disable_l1);
  sub->add_flag("--disable-ssim", t.disable_ssim);
  sub->add_flag("--disable-perceptual", t.disable_perceptual);
  sub->add_flag("--disable-gan", t.disable_gan);
  sub->add_option("--gan", a.gan, "GAN objective")->check(CLI::IsMember({"lsgan", "log"}))->capture_default_str();
  sub->add_flag("--hflip", t.hflip, "Random horizontal flips");
  sub->add_option("--checkpoint-every", t.checkpoint_every)->capture_default_str();
  add_model_options(sub, a.model);
}

int cmd_synth(const CLI::App& app, const SynthArgs& a) {
  const auto m = build_dataset(a.seed, a.count, a.out, a.options);
  echo_config(app, fs::path(a.out) / "run.ini");
  std::cout << "wrote " << m.samples.size() << " samples (" << m.split(Split::Train).size() << " train, "
            << m.split(Split::Test).size() << " test) to " << a.out << "\n";
  return kExitOk;
}

int cmd_train(const CLI::App& app, TrainArgs a) {
  a.train.gan_objective = a.gan == "log" ? GanObjective::Log : GanObjective::LeastSquares;
  a.train.validate();
  a.model.validate();
  const auto manifest = DatasetManifest::load(a.data);
  fs::create_directories(a.out);
  echo_config(app, fs::path(a.out) / "run.ini");
  TrainOptions opts;
  if (!a.resume.empty()) opts.resume_from = a.resume;
  opts.on_step = [&](int64_t step, const LossReport& r) {
    if (step % 100 == 0 || step == a.train.steps) {
      std::cout << "step " << step << " total " << r.total << " self " << r.terms.self << "\n" << std::flush;
    }
    return true;
  };
  const auto last = train(a.train, a.model, manifest, a.out, opts);
  std::cout << "final checkpoint " << last.string() << "\n";
  return kExitOk;
}

int cmd_enhance(const CLI::App& app, const EnhanceArgs& a) {
  auto model = load_model(a.checkpoint);
  model->eval();
  const Domain domain = degraded_domain(a.domain);
  if (fs::is_directory(a.input)) {
    fs::create_directories(a.out);
    for (const auto& e : list_images(a.input)) {
      write_png(render(*model, encode_image(*model, read_png(e.image), domain), a.alpha),
                fs::path(a.out) / (e.id + ".png"));
    }
    echo_config(app, fs::path(a.out) / "run.ini");
  } else {
    write_png(render(*model, encode_image(*model, read_png(a.input), domain), a.alpha), a.out);
    echo_config(app, echo_path_for_file(a.out));
  }
  return kExitOk;
}

int cmd_translate(const CLI::App& app, const TranslateArgs& a) {
  auto model = load_model(a.checkpoint);
  model->eval();
  write_png(translate(*model, read_png(a.input), read_png(a.ref), degraded_domain(a.ref_domain)), a.out);
  echo_config(app, echo_path_for_file(a.out));
  return kExitOk;
}

int cmd_interpolate(const CLI::App& app, const InterpolateArgs& a) {
  auto model = load_model(a.checkpoint);
  model->eval();
  const auto encoded = encode_image(*model, read_png(a.input), degraded_domain(a.domain));
  fs::create_directories(a.out);
  const std::string stem = fs::path(a.input).stem().string();
  for (double alpha : a.alphas) {
    write_png(render(*model, encoded, alpha), fs::path(a.out) / (stem + "_alpha_" + alpha_label(alpha) + ".png"));
  }
  echo_config(app, fs::path(a.out) / "run.ini");
  return kExitOk;
}

int cmd_eval(const CLI::App& app, const EvalArgs& a) {
  if (a.pairs.empty() == a.dir.empty()) throw UsageError("eval needs exactly one of --pairs or --dir");
  const auto entries = a.pairs.empty() ? list_images(a.dir) : read_pairs_csv(a.pairs);
  const auto report = evaluate_folder(entries, parse_metrics(a.metrics), a.out);
  echo_config(app, echo_path_for_file(a.out));
  for (size_t i = 0; i < report.metrics.size(); ++i) {
    std::cout << to_string(report.metrics[i]) << " " << report.means[i] << "\n";
  }
  return kExitOk;
}

int cmd_latents(const CLI::App& app, const LatentsArgs& a) {
  auto model = load_model(a.checkpoint);
  model->eval();
  const auto manifest = DatasetManifest::load(a.data);
  std::optional<Split> split;
  if (a.split == "train") split = Split::Train;
  if (a.split == "test") split = Split::Test;
  const auto col = harvest_latents(*model, manifest, split);
  const auto emb = embed_and_score(col, a.seed);
  const fs::path out(a.out);
  fs::create_directories(out);
  col.save(out / "latents.csv");
  write_file_atomic(out / "embedding.csv", emb.to_csv(col));
  write_file_atomic(out / "summary.json", emb.summary_json());
  echo_config(app, out / "run.ini");
  std::cout << emb.summary_json();
  return kExitOk;
}

Server* g_server = nullptr;

int cmd_serve(const ServeArgs& a) {
  auto model = load_model(a.checkpoint);
  auto service = std::make_shared<InferenceService>(std::move(model), file_digest(a.checkpoint), a.options);
  Server server(service, a.options);
  g_server = &server;
  auto on_signal = [](int) {
    if (g_server) g_server->stop();
  };
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "serving " << a.checkpoint << " on http://" << a.options.host << ":" << a.options.port << "\n"
            << std::flush;
  server.run();
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& argv) {
  CLI::App app{"Underwater image enhancement with style-latent manipulation", "uiess"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key=value config file; command-line flags take precedence");
  app.allow_config_extras(false);
  int threads = 0;
  app.add_option("--threads", threads, "Intra-op threads (0 keeps the library default)")->capture_default_str();

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--count", synth.count)->capture_default_str();
  s->add_option("--height", synth.options.height)->capture_default_str();
  s->add_option("--width", synth.options.width)->capture_default_str();
  s->add_option("--train-fraction", synth.options.train_fraction)->capture_default_str();
  s->add_option("--out", synth.out)->required();

  TrainArgs tr;
  add_train_options(app.add_subcommand("train", "Train a model"), tr);

  EnhanceArgs en;
  auto* e = app.add_subcommand("enhance", "Enhance an image or a directory of images");
  e->add_option("--checkpoint", en.checkpoint)->required();
  e->add_option("--input", en.input, "PNG file or directory")->required();
  e->add_option("--out", en.out, "PNG file, or directory when --input is one")->required();
  e->add_option("--domain", en.domain, "Domain of the input")->check(CLI::IsMember({"syn", "real"}))->capture_default_str();
  e->add_option("--alpha", en.alpha, "Enhancement level; 0 reconstructs the input")->capture_default_str();

  TranslateArgs tl;
  auto* t = app.add_subcommand("translate", "Render the content of one image in the style of another");
  t->add_option("--checkpoint", tl.checkpoint)->required();
  t->add_option("--input", tl.input, "Content source")->required();
  t->add_option("--ref", tl.ref, "Style reference")->required();
  t->add_option("--ref-domain", tl.ref_domain)->check(CLI::IsMember({"syn", "real"}))->capture_default_str();
  t->add_option("--out", tl.out)->required();

  InterpolateArgs ip;
  auto* i = app.add_subcommand("interpolate", "Render one image at several enhancement levels");
  i->add_option("--checkpoint", ip.checkpoint)->required();
  i->add_option("--input", ip.input)->required();
  i->add_option("--domain", ip.domain)->check(CLI::IsMember({"syn", "real"}))->capture_default_str();
  i->add_option("--alpha", ip.alphas, "Alpha values")->capture_default_str();
  i->add_option("--out", ip.out, "Output directory")->required();

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "Compute quality metrics");
  v->add_option("--metrics", ev.metrics, "Comma-separated: psnr,ssim,uiqm,uciqe")->capture_default_str();
  v->add_option("--pairs", ev.pairs, "CSV with id,image[,reference]");
  v->add_option("--dir", ev.dir, "Directory of PNGs (no-reference metrics only)");
  v->add_option("--out", ev.out, "CSV report")->required();

  LatentsArgs la;
  auto* l = app.add_subcommand("latents", "Harvest style latents and score their clustering");
  l->add_option("--checkpoint", la.checkpoint)->required();
  l->add_option("--data", la.data)->required();
  l->add_option("--split", la.split)->check(CLI::IsMember({"all", "train", "test"}))->capture_default_str();
  l->add_option("--seed", la.seed)->capture_default_str();
  l->add_option("--out", la.out)->required();

  ServeArgs sv;
  sv.options.port = -1;
  auto* w = app.add_subcommand("serve", "Run the HTTP inference service");
  w->add_option("--checkpoint", sv.checkpoint)->required();
  w->add_option("--host", sv.options.host)->capture_default_str();
  w->add_option("--port", sv.options.port, "Port (default: $UIESS_PORT, else 8080)");
  w->add_option("--cache-size", sv.options.cache_size)->capture_default_str();
  w->add_option("--max-side", sv.options.max_side)->capture_default_str();

  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) sub->configurable();

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  // --config is global but may follow the command name; hoist it so the file is read before requirements.
  for (size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size() && k > 0) {
      std::rotate(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(k), args.begin() + static_cast<std::ptrdiff_t>(k + 2));
    } else if (args[k].starts_with("--config=") && k > 0) {
      std::rotate(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(k), args.begin() + static_cast<std::ptrdiff_t>(k + 1));
    }
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (threads > 0) torch::set_num_threads(threads);
    if (*s) return cmd_synth(app, synth);
    if (app.got_subcommand("train")) return cmd_train(app, tr);
    if (*e) return cmd_enhance(app, en);
    if (*t) return cmd_translate(app, tl);
    if (*i) return cmd_interpolate(app, ip);
    if (*v) return cmd_eval(app, ev);
    if (*l) return cmd_latents(app, la);
    if (*w) {
      if (sv.options.port < 0) sv.options.port = port_from_env(8080);
      return cmd_serve(sv);
    }
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kExitData;
  } catch (const NumericError& err) {
    std::cerr << "numeric error: " << err.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace uiess
