#include "doctest_torch.hpp"

#include <cmath>

#include "test_util.hpp"
#include "uiess/errors.hpp"
#include "uiess/kvfile.hpp"
#include "uiess/losses.hpp"
#include "uiess/metrics.hpp"

using namespace uiess;
using testutil::TempDir;

namespace {

Image gray(double v, int64_t n = 32) { return Image::filled(n, n, {v, v, v}); }

Image checkerboard(int64_t n, int64_t cell, double lo, double hi) {
  auto t = torch::empty({3, n, n}, torch::kFloat64);
  for (int64_t y = 0; y < n; ++y) {
    for (int64_t x = 0; x < n; ++x) {
      const double v = ((y / cell + x / cell) % 2) ? hi : lo;
      for (int c = 0; c < 3; ++c) t[c][y][x] = v;
    }
  }
  return Image::from_tensor(t);
}

Image offset(const Image& img, double d) { return Image::from_tensor(img.tensor() + d); }

}  // namespace

TEST_CASE("psnr examples") {
  const Image a = testutil::random_image(16, 16, 1);
  CHECK(psnr(a, a) == kPsnrCap);

  const Image base = Image::from_tensor(a.tensor() * 0.8);
  CHECK(psnr(base, offset(base, 0.1)) == doctest::Approx(20.0).epsilon(1e-9));
  const Image b = testutil::random_image(16, 16, 2);
  CHECK(psnr(a, b) == psnr(b, a));
  CHECK_THROWS_AS(psnr(a, testutil::random_image(16, 17, 3)), UsageError);

  torch::manual_seed(4);
  const auto noise = torch::rand({3, 16, 16}, torch::kFloat64) - 0.5;
  double prev = 1e9;
  for (double amp : {0.05, 0.1, 0.2}) {
    const double v = psnr(base, Image::from_tensor_clamped(base.tensor() + amp * noise));
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("ssim metric shares the loss implementation") {
  const Image a = testutil::random_image(16, 16, 5), b = testutil::random_image(16, 16, 6);
  CHECK(ssim_metric(a, a) == 1.0);
  CHECK(ssim_metric(a, b) == ssim(a.tensor(), b.tensor()).item<double>());
  CHECK(ssim_metric(gray(0.2, 16), gray(0.8, 16)) == doctest::Approx(0.4709).epsilon(1e-3));
}

TEST_CASE("uiqm components") {
  const auto g = uiqm(gray(0.4));
  CHECK(g.uicm == 0.0);
  CHECK(g.uism == 0.0);

  const auto tinted = Image::filled(32, 32, {0.2, 0.5, 0.7});
  CHECK(uiqm(tinted).uism == 0.0);

  // Sobel responses vanish inside flat cells, so use a textured image for sharpness.
  const auto board = uiqm(testutil::random_image(32, 32, 11));
  const auto flat = uiqm(gray(0.5));
  CHECK(board.uism > flat.uism);
  CHECK(board.uiqm > flat.uiqm);
  CHECK(uiqm(checkerboard(32, 4, 0.2, 0.8)).uiconm > flat.uiconm);

  CHECK_THROWS_AS(uiqm(testutil::random_image(15, 32, 1)), UsageError);
}

TEST_CASE("uicm on a two-valued chroma plane") {
  // Half the pixels pure red (255, 0, 0), half black: RG = {255, 0}, YB = {127.5, 0}.
  auto t = torch::zeros({3, 16, 16}, torch::kFloat64);
  t.index_put_({0, torch::indexing::Slice(0, 8)}, 1.0);
  const auto r = uiqm(Image::from_tensor(t));
  // 256 sorted values, ceil(25.6) = 26 dropped from the low tail and floor(25.6) = 25 from the high one:
  // 102 zeros and 103 high values remain.
  const double share = 103.0 / 205.0;
  const double mu_rg = 255 * share, mu_yb = 127.5 * share;
  const double var_rg = 0.5 * (255 - mu_rg) * (255 - mu_rg) + 0.5 * mu_rg * mu_rg;
  const double var_yb = 0.5 * (127.5 - mu_yb) * (127.5 - mu_yb) + 0.5 * mu_yb * mu_yb;
  const double expected = -0.0268 * std::hypot(mu_rg, mu_yb) + 0.1586 * std::sqrt(var_rg + var_yb);
  CHECK(r.uicm == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("uciqe examples") {
  const auto g = uciqe(gray(0.5));
  CHECK(g.chroma_std == 0.0);
  CHECK(g.luminance_contrast == 0.0);
  CHECK(g.mean_saturation == 0.0);
  CHECK(g.uciqe == 0.0);

  // Same lightness pattern, more saturated colors: blend toward gray and compare.
  const Image vivid = testutil::random_image(32, 32, 7);
  const auto lum = vivid.tensor().mean(0, true).expand({3, 32, 32});
  const Image dull = Image::from_tensor(0.5 * vivid.tensor() + 0.5 * lum);
  CHECK(uciqe(vivid).mean_saturation > uciqe(dull).mean_saturation);
  CHECK(uciqe(vivid).uciqe > uciqe(dull).uciqe);

  const Image flipped = Image::from_tensor(vivid.tensor().flip({2}));
  CHECK(uciqe(flipped).uciqe == doctest::Approx(uciqe(vivid).uciqe).epsilon(1e-12));
  CHECK(uiqm(Image::from_tensor(vivid.tensor().flip({1}))).uicm == doctest::Approx(uiqm(vivid).uicm).epsilon(1e-12));
}

TEST_CASE("CIELAB conversion against a direct evaluation") {
  // sRGB-primaries XYZ matrix, D65 white from its row sums, CIE f with the 6/29 knee.
  const double m[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                          {0.2126729, 0.7151522, 0.0721750},
                          {0.0193339, 0.1191920, 0.9503041}};
  auto f = [](double t) { return t > std::pow(6.0 / 29.0, 3) ? std::pow(t, 1.0 / 3.0) : t * 841.0 / 108.0 + 4.0 / 29.0; };
  for (auto rgb : {std::array<double, 3>{0.9, 0.2, 0.1}, {0.1, 0.6, 0.7}, {0.01, 0.02, 0.005}}) {
    double xyz[3], w[3];
    for (int i = 0; i < 3; ++i) {
      xyz[i] = m[i][0] * rgb[0] + m[i][1] * rgb[1] + m[i][2] * rgb[2];
      w[i] = m[i][0] + m[i][1] + m[i][2];
    }
    const Lab lab = rgb_to_lab(rgb[0], rgb[1], rgb[2]);
    CHECK(lab.l == doctest::Approx(116 * f(xyz[1] / w[1]) - 16).epsilon(1e-12));
    CHECK(lab.a == doctest::Approx(500 * (f(xyz[0] / w[0]) - f(xyz[1] / w[1]))).epsilon(1e-12));
    CHECK(lab.b == doctest::Approx(200 * (f(xyz[1] / w[1]) - f(xyz[2] / w[2]))).epsilon(1e-12));
  }
  const Lab white = rgb_to_lab(1, 1, 1);
  CHECK(white.l == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(white.a == 0.0);
  CHECK(white.b == 0.0);
}

TEST_CASE("metrics stay finite on random images") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    const Image img = testutil::random_image(24, 40, seed);
    const auto q = uiqm(img);
    const auto u = uciqe(img);
    CHECK(std::isfinite(q.uiqm));
    CHECK(std::isfinite(u.uciqe));
  }
  CHECK(std::isfinite(uiqm(Image::filled(16, 16, {0, 0, 0})).uiqm));
  CHECK(std::isfinite(uciqe(Image::filled(16, 16, {0, 0, 0})).uciqe));
}

TEST_CASE("metric list parsing") {
  CHECK((parse_metrics("psnr,ssim") == std::vector<Metric>{Metric::Psnr, Metric::Ssim}));
  CHECK_THROWS_AS(parse_metrics("psnr,foo"), UsageError);
  CHECK(needs_reference(Metric::Ssim));
  CHECK_FALSE(needs_reference(Metric::Uciqe));
}

TEST_CASE("folder evaluation") {
  TempDir d;
  std::string pairs = "id,image,reference\n";
  for (int i = 3; i >= 0; --i) {
    const auto name = "img" + std::to_string(i) + ".png";
    write_png(testutil::random_image(16, 16, 100 + i), d / name);
    pairs += "s" + std::to_string(i) + "," + name + "," + name + "\n";
  }
  write_file_atomic(d / "pairs.csv", pairs);
  const auto rep = evaluate_folder(read_pairs_csv(d / "pairs.csv"), parse_metrics("psnr,ssim"), d / "report.csv");
  CHECK((rep.ids == std::vector<std::string>{"s0", "s1", "s2", "s3"}));
  CHECK(rep.means[0] == 99.0);
  CHECK(rep.means[1] == 1.0);

  // Means equal the arithmetic means of the rows written to disk.
  write_png(testutil::random_image(16, 16, 200), d / "other.png");
  write_file_atomic(d / "mixed.csv", "id,image,reference\na,img0.png,other.png\nb,img1.png,img2.png\nc,img3.png,img3.png\n");
  evaluate_folder(read_pairs_csv(d / "mixed.csv"), parse_metrics("psnr,ssim,uiqm,uciqe"), d / "mixed_report.csv");
  const auto parsed = MetricReport::from_csv(read_file(d / "mixed_report.csv"));
  REQUIRE(parsed.values.size() == 3);
  for (size_t k = 0; k < parsed.metrics.size(); ++k) {
    double sum = 0;
    for (const auto& row : parsed.values) sum += row[k];
    CHECK(parsed.means[k] == doctest::Approx(sum / 3.0).epsilon(1e-12));
  }

  TempDir empty;
  CHECK_THROWS_AS(evaluate_folder(list_images(empty.path()), parse_metrics("uiqm"), empty / "r.csv"), DataError);
  CHECK_THROWS_AS(evaluate_entries(list_images(d.path()), parse_metrics("psnr")), DataError);
  CHECK(evaluate_entries(list_images(d.path()), parse_metrics("uiqm,uciqe")).ids.size() == 5);
}
