#include "doctest_torch.hpp"

#include "gradcheck.hpp"
#include "test_util.hpp"
#include "uiess/errors.hpp"
#include "uiess/losses.hpp"

using namespace uiess;
using testutil::check_gradient;

namespace {

torch::Tensor full(double v, int64_t h = 8, int64_t w = 8) { return torch::full({1, 3, h, w}, v, torch::kFloat64); }

torch::Tensor rnd(uint64_t seed, int64_t h = 8, int64_t w = 8) {
  torch::manual_seed(seed);
  return torch::rand({1, 3, h, w}, torch::kFloat64);
}

double val(const torch::Tensor& t) { return t.item<double>(); }

// One stage whose 3x3 kernels copy each input channel: features are relu(x).
PerceptualExtractor identity_extractor() {
  auto w = torch::zeros({3, 3, 3, 3});
  for (int c = 0; c < 3; ++c) w[c][c][1][1] = 1.0;
  return PerceptualExtractor(std::vector<PerceptualExtractor::Stage>{{w, torch::zeros({3}), 1}});
}

}  // namespace

TEST_CASE("cycle loss") {
  auto x = rnd(1), y = rnd(2);
  CHECK(val(loss_cycle(x, y, x, y)) == 0.0);
  CHECK(val(loss_cycle(full(0), y, full(0.5), y)) == doctest::Approx(0.5).epsilon(1e-12));

  auto perm = torch::randperm(64);
  auto shuffle = [&](const torch::Tensor& t) { return t.reshape({1, 3, 64}).index_select(2, perm).reshape({1, 3, 8, 8}); };
  auto xc = rnd(3), yc = rnd(4);
  CHECK(val(loss_cycle(shuffle(x), shuffle(y), shuffle(xc), shuffle(yc))) ==
        doctest::Approx(val(loss_cycle(x, y, xc, yc))).epsilon(1e-12));
  CHECK_THROWS_AS(loss_cycle(x, y, full(0, 8, 6), y), UsageError);
}

TEST_CASE("self-reconstruction loss") {
  auto x = rnd(1) * 0.8, y = rnd(2), xr = rnd(3), yr = rnd(4);
  CHECK(val(loss_self(x, x, y, y)) == 0.0);
  CHECK(val(loss_self(x, x + 0.1, y, y)) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(val(loss_self(x, xr, y, yr)) == doctest::Approx(val(loss_self(y, yr, x, xr))).epsilon(1e-15));
}

TEST_CASE("LSGAN loss") {
  std::vector<torch::Tensor> ones{torch::ones({1, 1, 4, 4})}, zeros{torch::zeros({1, 1, 4, 4})};
  std::vector<torch::Tensor> half{torch::full({1, 1, 4, 4}, 0.5)};
  CHECK(val(loss_lsgan(ones, zeros, GanSide::Discriminator)) == 0.0);
  CHECK(val(loss_lsgan({}, ones, GanSide::Generator)) == 0.0);
  CHECK(val(loss_lsgan(half, half, GanSide::Discriminator)) == doctest::Approx(0.5).epsilon(1e-7));
  CHECK_THROWS_AS(loss_lsgan(ones, {}, GanSide::Discriminator), UsageError);

  // Two scales add.
  std::vector<torch::Tensor> two{torch::full({1, 1, 4, 4}, 0.5), torch::full({1, 1, 2, 2}, 0.5)};
  CHECK(val(loss_lsgan(two, two, GanSide::Discriminator)) == doctest::Approx(1.0).epsilon(1e-7));

  // The log form is available too: at s = 0 both sides cost log 2 per term.
  CHECK(val(loss_gan(zeros, zeros, GanSide::Discriminator, GanObjective::Log)) ==
        doctest::Approx(2 * std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("pixel loss") {
  auto t = rnd(5) * 0.5;
  CHECK(val(loss_pixel(t, t, t)) == 0.0);
  CHECK(val(loss_pixel(t, t + 0.2, t)) == doctest::Approx(0.2).epsilon(1e-12));
  auto big = torch::rand({1, 3, 16, 16}, torch::kFloat64) * 0.5;
  CHECK(val(loss_pixel(big, big + 0.2, big)) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("ssim examples") {
  auto a = rnd(6), b = rnd(7);
  CHECK(val(ssim(a, a)) == 1.0);
  CHECK(val(ssim(full(0.5), full(0.5))) == 1.0);
  const double c1 = 0.01 * 0.01;
  const double closed = (2 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
  CHECK(val(ssim(full(0.2), full(0.8))) == doctest::Approx(closed).epsilon(1e-12));
  CHECK(closed == doctest::Approx(0.4709).epsilon(1e-3));
  CHECK(val(ssim(a, b)) == doctest::Approx(val(ssim(b, a))).epsilon(1e-14));

  SsimOptions even;
  even.window = 6;
  CHECK_THROWS_AS(ssim(a, b, even), UsageError);
  SsimOptions large;
  large.window = 9;
  CHECK_THROWS_AS(ssim(a, b, large), UsageError);
}

TEST_CASE("ssim is invariant to a shared translation") {
  auto a = rnd(8, 32, 32), b = rnd(9, 32, 32);
  auto sa = torch::roll(a, {2, 3}, {2, 3}), sb = torch::roll(b, {2, 3}, {2, 3});
  auto crop = [](const torch::Tensor& t, int64_t y, int64_t x) { return t.narrow(2, y, 24).narrow(3, x, 24); };
  CHECK(val(ssim(crop(a, 4, 4), crop(b, 4, 4))) == doctest::Approx(val(ssim(crop(sa, 6, 7), crop(sb, 6, 7)))).epsilon(1e-14));
}

TEST_CASE("ssim pair loss") {
  auto t = rnd(10), e = rnd(11);
  CHECK(val(loss_ssim_pair(t, t, t)) == 0.0);
  const double s = val(ssim(e, t));
  CHECK(val(loss_ssim_pair(t, e, t)) == doctest::Approx(1.0 - s).epsilon(1e-14));
  for (uint64_t k = 0; k < 5; ++k) {
    const double v = val(loss_ssim_pair(rnd(20 + k), rnd(30 + k), rnd(40 + k)));
    CHECK(v >= 0.0);
    CHECK(v <= 4.0);
  }
}

TEST_CASE("perceptual loss") {
  const PerceptualExtractor net(0);
  auto t = rnd(12, 16, 16), a = rnd(13, 16, 16), b = rnd(14, 16, 16);
  CHECK(val(loss_perceptual(t, t, t, net)) == 0.0);
  CHECK(val(loss_perceptual(a, b, t, net)) >= 0.0);

  const auto one = identity_extractor();
  auto base = rnd(15) * 0.5 + 0.1;
  CHECK(val(loss_perceptual(base + 0.1, base, base, one)) == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(val(loss_perceptual(base + 0.1, base + 0.1, base, one)) == doctest::Approx(0.02).epsilon(1e-9));

  // The frozen extractor is a pure function of its seed.
  const PerceptualExtractor again(0);
  for (size_t i = 0; i < net.stages().size(); ++i) CHECK(torch::equal(net.stages()[i].weight, again.stages()[i].weight));
}

TEST_CASE("total variation") {
  const double eps_bound = 8 * 8 * 3 * std::sqrt(2 * kTvEps);
  CHECK(val(loss_tv(full(0.3))) <= eps_bound);

  // Vertical step edge of height 0.4 in channel 0 between columns 3 and 4.
  auto img = full(0.2);
  img.index_put_({0, 0, torch::indexing::Slice(), torch::indexing::Slice(4, 8)}, 0.6);
  const double expected = 7 * 0.4;
  CHECK(std::abs(val(loss_tv(img)) - expected) <= eps_bound + 1e-12);

  auto r = rnd(16);
  CHECK(val(loss_tv(r)) == doctest::Approx(val(loss_tv(1.0 - r))).epsilon(1e-12));
  CHECK_THROWS_AS(loss_tv(torch::zeros({1, 3, 1, 8})), UsageError);
}

TEST_CASE("latent loss") {
  auto a = torch::rand({1, 8}, torch::kFloat64);
  auto b = a.clone();
  b[0][3] += 0.5;
  CHECK(val(loss_latent(StyleLatent{a, Domain::Clean}, StyleLatent{a, Domain::Clean})) == 0.0);
  CHECK(val(loss_latent(StyleLatent{a, Domain::Clean}, StyleLatent{b, Domain::Clean})) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(val(loss_latent(a, b)) == val(loss_latent(b, a)));
  CHECK_THROWS_AS(loss_latent(StyleLatent{a, Domain::Syn}, StyleLatent{b, Domain::Clean}), UsageError);
}

TEST_CASE("aggregate follows the weighted sums") {
  CHECK(aggregate({}, {}).total == 0.0);

  LossTerms ones{1, 1, 1, 1, 1, 1, 1, 1, 1};
  LossWeights unit{1, 1, 1, 1, 1};
  const auto r = aggregate(ones, unit);
  CHECK(r.tran == 3.0);
  CHECK(r.iq == 2.0);
  CHECK(r.en == 5.0);
  CHECK(r.total == 8.0);

  LossTerms t{0.3, 0.2, 1.1, 0.9, 0.05, 0.4, 0.7, 250.0, 0.02};
  LossWeights w;
  const auto base = aggregate(t, w);
  LossWeights w2 = w;
  w2.lambda_tv *= 2;
  CHECK(aggregate(t, w2).total - base.total == doctest::Approx(w.lambda_tv * t.tv).epsilon(1e-12));
  CHECK(aggregate(t, w2).tran == base.tran);

  // Perturbing one term at a time moves the total by that term's coefficient.
  const double coef[] = {1, w.lambda_self, 1, 0, w.lambda_iq, w.lambda_iq, w.lambda_per, w.lambda_tv, w.lambda_latent};
  double* fields[] = {&t.cyc, &t.self, &t.gan_g, &t.gan_d, &t.pixel, &t.ssim, &t.per, &t.tv, &t.latent};
  for (int i = 0; i < 9; ++i) {
    *fields[i] += 1.0;
    CHECK(aggregate(t, w).total - base.total == doctest::Approx(coef[i]).epsilon(1e-9));
    *fields[i] -= 1.0;
  }

  CHECK(LossReport::csv_columns().size() == r.csv_values().size());
  LossWeights bad;
  bad.lambda_per = -1;
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("loss gradients match central differences") {
  auto target = rnd(50), other = rnd(51);
  const PerceptualExtractor net(0);
  auto z = torch::randn({1, 8}, torch::kFloat64);
  auto fake = torch::randn({1, 1, 4, 4}, torch::kFloat64);

  const std::pair<const char*, std::function<torch::Tensor(const torch::Tensor&)>> cases[] = {
      {"pixel", [&](const torch::Tensor& x) { return loss_pixel(x, other, target); }},
      {"ssim", [&](const torch::Tensor& x) { return loss_ssim_pair(x, other, target); }},
      {"tv", [&](const torch::Tensor& x) { return loss_tv(x); }},
      {"perceptual", [&](const torch::Tensor& x) { return loss_perceptual(x, other, target, net); }},
  };
  for (const auto& [name, f] : cases) {
    INFO(name);
    const auto g = check_gradient(f, rnd(60));
    CHECK(g.checked > 0);
    CHECK(g.max_rel_error < 1e-3);
  }

  const auto gl = check_gradient([&](const torch::Tensor& x) { return loss_latent(x, z); }, torch::randn({1, 8}));
  CHECK(gl.max_rel_error < 1e-3);
  const auto gd = check_gradient(
      [&](const torch::Tensor& s) { return loss_lsgan({s}, {fake}, GanSide::Discriminator); }, torch::randn({1, 1, 4, 4}));
  CHECK(gd.max_rel_error < 1e-3);
  const auto gg =
      check_gradient([&](const torch::Tensor& s) { return loss_lsgan({}, {s}, GanSide::Generator); }, torch::randn({1, 1, 4, 4}));
  CHECK(gg.max_rel_error < 1e-3);
}
