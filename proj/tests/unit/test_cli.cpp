#include "doctest_torch.hpp"

#include "test_util.hpp"
#include "uiess/cli.hpp"
#include "uiess/datasynth.hpp"
#include "uiess/inference.hpp"
#include "uiess/kvfile.hpp"
#include "uiess/latentlab.hpp"
#include "uiess/metrics.hpp"
#include "uiess/trainer.hpp"

using namespace uiess;
using testutil::TempDir;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "uiess");
  return run_cli(args);
}

const std::vector<std::string> kTinyModel = {"--base-filters",        "8",  "--content-channels",  "16",
                                             "--content-resblocks",   "1",  "--generator-resblocks", "1",
                                             "--style-channels",      "16", "--adain-hidden",      "32",
                                             "--transform-hidden",    "16"};

// One shared tiny dataset and a 4-step checkpoint for the inference commands.
struct Fixture {
  TempDir dir;
  std::filesystem::path data, run, ckpt;
  Fixture() {
    data = dir / "data";
    run = dir / "run";
    REQUIRE(cli({"synth", "--seed", "2", "--count", "6", "--height", "32", "--width", "32", "--out", data.string()}) ==
            kExitOk);
    std::vector<std::string> args = {"train", "--data", data.string(), "--out", run.string(), "--steps", "4",
                                     "--patch", "32"};
    args.insert(args.end(), kTinyModel.begin(), kTinyModel.end());
    REQUIRE(cli(args) == kExitOk);
    ckpt = checkpoint_path(run, 4);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("synth writes a loadable dataset and its config echo") {
  auto& f = fixture();
  const auto m = DatasetManifest::load(f.data);
  CHECK(m.samples.size() == 6);
  CHECK(std::filesystem::exists(f.data / "run.ini"));
  CHECK(read_file(f.data / "run.ini").find("count=6") != std::string::npos);
}

TEST_CASE("train writes the log, checkpoint and echo") {
  auto& f = fixture();
  CHECK(std::filesystem::exists(f.ckpt));
  CHECK(read_loss_log(f.run / kLossLogName).size() == 4);
  CHECK(load_model(f.ckpt)->config() == testutil::tiny_config());
  CHECK(std::filesystem::exists(f.run / "run.ini"));
}

TEST_CASE("exit codes") {
  auto& f = fixture();
  TempDir d;
  CHECK(cli({"synth", "--bogus", "1", "--out", d.path().string()}) == kExitUsage);
  CHECK(cli({}) == kExitUsage);
  CHECK(cli({"--help"}) == kExitOk);
  CHECK(cli({"enhance", "--checkpoint", f.ckpt.string(), "--input", (d / "missing.png").string(), "--out",
             (d / "o.png").string()}) == kExitData);
  CHECK(cli({"enhance", "--checkpoint", (d / "none.ckpt").string(), "--input", (d / "missing.png").string(), "--out",
             (d / "o.png").string()}) == kExitData);
  CHECK(cli({"enhance", "--checkpoint", f.ckpt.string(), "--input", "x", "--out", "y", "--domain", "clean"}) ==
        kExitUsage);
  CHECK(cli({"train", "--data", f.data.string(), "--out", (d / "r").string(), "--patch", "30"}) == kExitUsage);
  CHECK(cli({"eval", "--out", (d / "r.csv").string()}) == kExitUsage);
}

TEST_CASE("enhance, interpolate and translate agree with the library") {
  auto& f = fixture();
  TempDir d;
  const auto m = DatasetManifest::load(f.data);
  const auto input = m.resolve(m.samples[0].syn);
  const auto before = read_file(input);

  REQUIRE(cli({"enhance", "--checkpoint", f.ckpt.string(), "--input", input.string(), "--out",
               (d / "e1.png").string(), "--domain", "syn"}) == kExitOk);
  REQUIRE(cli({"enhance", "--checkpoint", f.ckpt.string(), "--input", input.string(), "--out",
               (d / "e0.png").string(), "--domain", "syn", "--alpha", "0"}) == kExitOk);
  REQUIRE(cli({"interpolate", "--checkpoint", f.ckpt.string(), "--input", input.string(), "--domain", "syn",
               "--out", (d / "interp").string()}) == kExitOk);

  auto model = load_model(f.ckpt);
  model->eval();
  const Image img = read_png(input);
  const auto enc = encode_image(*model, img, Domain::Syn);
  CHECK(identical(read_png(d / "e1.png"), quantize8(enhance(*model, img, Domain::Syn))));
  CHECK(identical(read_png(d / "e0.png"), quantize8(render(*model, enc, 0.0))));

  const std::string stem = input.stem().string();
  for (const char* a : {"0.0000", "0.2500", "0.5000", "0.7500", "1.0000"}) {
    CHECK(std::filesystem::exists(d / "interp" / (stem + "_alpha_" + a + ".png")));
  }
  CHECK(read_file(d / "interp" / (stem + "_alpha_0.0000.png")) == read_file(d / "e0.png"));
  CHECK(read_file(d / "interp" / (stem + "_alpha_1.0000.png")) == read_file(d / "e1.png"));

  const auto ref = m.resolve(m.samples[1].real);
  REQUIRE(cli({"translate", "--checkpoint", f.ckpt.string(), "--input", input.string(), "--ref", ref.string(),
               "--out", (d / "t.png").string()}) == kExitOk);
  CHECK(identical(read_png(d / "t.png"), quantize8(translate(*model, img, read_png(ref), Domain::Real))));

  REQUIRE(cli({"enhance", "--checkpoint", f.ckpt.string(), "--input", (f.data / "real").string(), "--out",
               (d / "batch").string()}) == kExitOk);
  CHECK(list_images(d / "batch").size() == 6);
  CHECK(read_file(input) == before);
}

TEST_CASE("a config echo reproduces the run") {
  auto& f = fixture();
  TempDir d;
  const auto m = DatasetManifest::load(f.data);
  const auto input = m.resolve(m.samples[2].real).string();
  REQUIRE(cli({"enhance", "--checkpoint", f.ckpt.string(), "--input", input, "--out", (d / "a.png").string(),
               "--alpha", "0.3"}) == kExitOk);
  const auto echo = read_file(d / "a.png.run.ini");
  CHECK(echo.find("alpha=0.3") != std::string::npos);

  // Rerun from the echo with the output redirected.
  std::string edited = echo;
  const auto pos = edited.find((d / "a.png").string());
  REQUIRE(pos != std::string::npos);
  edited.replace(pos, (d / "a.png").string().size(), (d / "b.png").string());
  write_file_atomic(d / "b.ini", edited);
  REQUIRE(cli({"enhance", "--config", (d / "b.ini").string()}) == kExitOk);
  CHECK(read_file(d / "a.png") == read_file(d / "b.png"));

  // Flags override values from the file.
  REQUIRE(cli({"enhance", "--config", (d / "b.ini").string(), "--alpha", "1", "--out", (d / "c.png").string()}) ==
          kExitOk);
  REQUIRE(cli({"enhance", "--checkpoint", f.ckpt.string(), "--input", input, "--out", (d / "d.png").string()}) ==
          kExitOk);
  CHECK(read_file(d / "c.png") == read_file(d / "d.png"));
}

TEST_CASE("eval writes a report") {
  auto& f = fixture();
  TempDir d;
  const auto m = DatasetManifest::load(f.data);
  std::string pairs = "id,image,reference\n";
  for (const auto& s : m.samples) pairs += s.id + "," + m.resolve(s.syn).string() + "," + m.resolve(s.clean).string() + "\n";
  write_file_atomic(d / "pairs.csv", pairs);
  REQUIRE(cli({"eval", "--pairs", (d / "pairs.csv").string(), "--metrics", "psnr,ssim,uiqm,uciqe", "--out",
               (d / "report.csv").string()}) == kExitOk);
  const auto rep = MetricReport::from_csv(read_file(d / "report.csv"));
  CHECK(rep.values.size() == 6);
  CHECK(rep.metrics.size() == 4);

  REQUIRE(cli({"eval", "--dir", (f.data / "syn").string(), "--metrics", "uiqm", "--out", (d / "nr.csv").string()}) ==
          kExitOk);
  CHECK(cli({"eval", "--dir", (f.data / "syn").string(), "--metrics", "psnr", "--out", (d / "x.csv").string()}) ==
        kExitData);
}

TEST_CASE("latents writes the collection, embedding and summary") {
  auto& f = fixture();
  TempDir d;
  REQUIRE(cli({"latents", "--checkpoint", f.ckpt.string(), "--data", f.data.string(), "--out", (d / "lat").string()}) ==
          kExitOk);
  const auto col = LatentCollection::load(d / "lat" / "latents.csv");
  CHECK(col.records.size() == 24);
  CHECK(std::filesystem::exists(d / "lat" / "embedding.csv"));
  const auto summary = nlohmann::json::parse(read_file(d / "lat" / "summary.json"));
  CHECK(summary.contains("silhouette_merged"));
}
