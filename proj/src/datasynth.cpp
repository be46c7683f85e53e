#include "uiess/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <cstdio>

#include "uiess/errors.hpp"
#include "uiess/kvfile.hpp"

namespace uiess {

namespace {

constexpr double kMaxDepth = 3.0;

Rgb hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Rgb random_color(Rng& rng) {
  return hsv_to_rgb(uniform(rng, 0.0, 1.0), uniform(rng, 0.15, 0.5), uniform(rng, 0.45, 0.95));
}

bool finite3(const Rgb& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string rgb_str(const Rgb& v) {
  return format_double(v[0]) + " " + format_double(v[1]) + " " + format_double(v[2]);
}

Rgb parse_rgb(const std::string& s) {
  std::istringstream in(s);
  Rgb v{};
  if (!(in >> v[0] >> v[1] >> v[2])) throw DataError("malformed triple: " + s);
  return v;
}

std::string sample_key(int64_t i, const char* field) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "sample.%04lld.%s", static_cast<long long>(i), field);
  return buf;
}

}  // namespace

void DegradationParams::validate() const {
  if (!finite3(eta) || !finite3(ambient)) throw UsageError("degradation parameters must be finite");
  for (int c = 0; c < 3; ++c) {
    if (eta[c] <= 0.0) throw UsageError("eta must be positive");
    if (ambient[c] < 0.0 || ambient[c] > 1.0) throw UsageError("ambient light must lie in [0, 1]");
  }
}

void RealProxyParams::validate() const {
  if (!finite3(gamma) || !finite3(cast) || !std::isfinite(blend) || !std::isfinite(vignette_strength)) {
    throw UsageError("real-proxy parameters must be finite");
  }
  for (int c = 0; c < 3; ++c) {
    if (gamma[c] < 0.3 || gamma[c] > 3.0) throw UsageError("gamma must lie in [0.3, 3]");
    if (cast[c] < 0.0 || cast[c] > 1.0) throw UsageError("cast must lie in [0, 1]");
  }
  if (blend < 0.0 || blend > 1.0) throw UsageError("blend must lie in [0, 1]");
  if (vignette_strength < 0.0 || vignette_strength > 1.0) throw UsageError("vignette strength must lie in [0, 1]");
}

uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Scene render_clean_scene(uint64_t seed, int64_t height, int64_t width) {
  if (height < Image::kMinSide || width < Image::kMinSide) throw UsageError("scene sides must be >= 8");
  Rng rng(derive_seed(seed, 0x5CE4E));

  auto img = torch::empty({3, height, width}, torch::kFloat64);
  auto depth = torch::empty({height, width}, torch::kFloat64);
  auto px = img.accessor<double, 3>();
  auto dp = depth.accessor<double, 2>();

  // Background: vertical blend between two colors.
  const Rgb top = random_color(rng);
  const Rgb bottom = random_color(rng);
  for (int64_t r = 0; r < height; ++r) {
    const double t = height > 1 ? static_cast<double>(r) / static_cast<double>(height - 1) : 0.0;
    for (int64_t c = 0; c < width; ++c) {
      for (int k = 0; k < 3; ++k) px[k][r][c] = (1 - t) * top[k] + t * bottom[k];
    }
  }

  // Foreground: rectangles and ellipses with flat colors and a mild shading ramp.
  const int shapes = 3 + static_cast<int>(uniform(rng, 0.0, 4.0));
  for (int s = 0; s < shapes; ++s) {
    const Rgb color = random_color(rng);
    const bool ellipse = uniform(rng, 0.0, 1.0) < 0.5;
    const double cy = uniform(rng, 0.1, 0.9) * height, cx = uniform(rng, 0.1, 0.9) * width;
    const double ry = uniform(rng, 0.08, 0.3) * height, rx = uniform(rng, 0.08, 0.3) * width;
    const double shade = uniform(rng, -0.15, 0.15);
    for (int64_t r = 0; r < height; ++r) {
      for (int64_t c = 0; c < width; ++c) {
        const double dy = (r + 0.5 - cy) / ry, dx = (c + 0.5 - cx) / rx;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        for (int k = 0; k < 3; ++k) px[k][r][c] = std::clamp(color[k] * (1.0 + shade * dy), 0.0, 1.0);
      }
    }
  }

  // Depth: planar ramp in a random direction plus two low-frequency sinusoids, rescaled to [near, far].
  const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double gy = std::sin(angle), gx = std::cos(angle);
  struct Wave { double fy, fx, phase, amp; };
  Wave waves[2];
  for (auto& w : waves) {
    w = {uniform(rng, 0.5, 2.0), uniform(rng, 0.5, 2.0), uniform(rng, 0.0, 2.0 * std::numbers::pi),
         uniform(rng, 0.05, 0.15)};
  }
  const double near = uniform(rng, 0.0, 0.5), far = uniform(rng, 1.5, kMaxDepth);
  double lo = 1e300, hi = -1e300;
  for (int64_t r = 0; r < height; ++r) {
    for (int64_t c = 0; c < width; ++c) {
      const double y = static_cast<double>(r) / height, x = static_cast<double>(c) / width;
      double v = gy * y + gx * x;
      for (const auto& w : waves) v += w.amp * std::sin(2 * std::numbers::pi * (w.fy * y + w.fx * x) + w.phase);
      dp[r][c] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double span = hi > lo ? hi - lo : 1.0;
  for (int64_t r = 0; r < height; ++r) {
    for (int64_t c = 0; c < width; ++c) dp[r][c] = near + (far - near) * (dp[r][c] - lo) / span;
  }

  return {Image::from_tensor(img.clamp(0.0, 1.0)), DepthMap::from_tensor(depth)};
}

Image degrade_jaffe(const Image& clean, const DepthMap& depth, const DegradationParams& params) {
  params.validate();
  if (clean.height() != depth.height() || clean.width() != depth.width()) {
    throw UsageError("clean image and depth map shapes differ");
  }
  auto out = torch::empty_like(clean.tensor());
  for (int c = 0; c < 3; ++c) {
    auto transmission = torch::exp(-params.eta[c] * depth.tensor());
    out[c] = clean.tensor()[c] * transmission + params.ambient[c] * (1.0 - transmission);
  }
  // A convex combination of values in [0, 1] stays in range up to rounding.
  return Image::from_tensor(out.clamp(0.0, 1.0));
}

Image degrade_real_proxy(const Image& clean, const RealProxyParams& params) {
  params.validate();
  const int64_t h = clean.height(), w = clean.width();
  auto out = torch::empty_like(clean.tensor());
  for (int c = 0; c < 3; ++c) {
    auto curve = params.gamma[c] == 1.0 ? clean.tensor()[c] : torch::pow(clean.tensor()[c], params.gamma[c]);
    out[c] = (params.blend * params.cast[c] + (1.0 - params.blend) * curve).clamp(0.0, 1.0);
  }
  if (params.vignette_strength > 0.0) {
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    auto ys = torch::arange(h, torch::kFloat64).sub(cy).pow(2).unsqueeze(1);
    auto xs = torch::arange(w, torch::kFloat64).sub(cx).pow(2).unsqueeze(0);
    auto r2 = (ys + xs) / (cy * cy + cx * cx);
    out = out * (1.0 - params.vignette_strength * r2).unsqueeze(0);
  }
  return Image::from_tensor(out);
}

DegradationParams sample_jaffe_params(Rng& rng) {
  DegradationParams p;
  p.eta = {uniform(rng, 0.8, 1.6), uniform(rng, 0.2, 0.8), uniform(rng, 0.1, 0.5)};
  p.ambient = {uniform(rng, 0.0, 0.2), uniform(rng, 0.2, 0.6), uniform(rng, 0.3, 0.7)};
  return p;
}

RealProxyParams sample_real_proxy_params(Rng& rng) {
  RealProxyParams p;
  p.gamma = {uniform(rng, 0.8, 1.1), uniform(rng, 0.8, 1.1), uniform(rng, 1.4, 2.2)};
  p.cast = {uniform(rng, 0.45, 0.6), uniform(rng, 0.4, 0.6), uniform(rng, 0.05, 0.15)};
  p.blend = uniform(rng, 0.35, 0.6);
  p.vignette_strength = uniform(rng, 0.2, 0.5);
  return p;
}

std::vector<DatasetSample> DatasetManifest::split(Split which) const {
  std::vector<DatasetSample> out;
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(out),
               [which](const DatasetSample& s) { return s.split == which; });
  return out;
}

void DatasetManifest::save(const std::filesystem::path& dir) const {
  KeyValueFile kv;
  kv.set("format", std::string(kFormat));
  kv.set("seed", std::to_string(seed));
  kv.set("count", count);
  kv.set("height", options.height);
  kv.set("width", options.width);
  kv.set("train_fraction", options.train_fraction);
  kv.set("depth_scale", kDepthScale);
  for (int64_t i = 0; i < static_cast<int64_t>(samples.size()); ++i) {
    const auto& s = samples[i];
    kv.set(sample_key(i, "id"), s.id);
    kv.set(sample_key(i, "split"), std::string(s.split == Split::Train ? "train" : "test"));
    kv.set(sample_key(i, "clean"), s.clean.generic_string());
    kv.set(sample_key(i, "syn"), s.syn.generic_string());
    kv.set(sample_key(i, "real"), s.real.generic_string());
    kv.set(sample_key(i, "depth"), s.depth.generic_string());
    kv.set(sample_key(i, "syn_eta"), rgb_str(s.syn_params.eta));
    kv.set(sample_key(i, "syn_ambient"), rgb_str(s.syn_params.ambient));
    kv.set(sample_key(i, "real_gamma"), rgb_str(s.real_params.gamma));
    kv.set(sample_key(i, "real_cast"), rgb_str(s.real_params.cast));
    kv.set(sample_key(i, "real_blend"), s.real_params.blend);
    kv.set(sample_key(i, "real_vignette"), s.real_params.vignette_strength);
  }
  kv.save(dir / kFileName);
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / kFileName : path;
  if (!std::filesystem::exists(file)) throw DataError("manifest not found: " + file.string());
  const auto kv = KeyValueFile::load(file);
  if (kv.get("format") != kFormat) throw DataError("unsupported manifest format in " + file.string());

  DatasetManifest m;
  m.root = file.parent_path();
  m.seed = std::stoull(kv.get("seed"));
  m.count = kv.get_int("count");
  m.options.height = kv.get_int("height");
  m.options.width = kv.get_int("width");
  m.options.train_fraction = kv.get_double("train_fraction");
  for (int64_t i = 0; i < m.count; ++i) {
    DatasetSample s;
    s.id = kv.get(sample_key(i, "id"));
    const auto split = kv.get(sample_key(i, "split"));
    if (split != "train" && split != "test") throw DataError("bad split for sample " + s.id);
    s.split = split == "train" ? Split::Train : Split::Test;
    s.clean = kv.get(sample_key(i, "clean"));
    s.syn = kv.get(sample_key(i, "syn"));
    s.real = kv.get(sample_key(i, "real"));
    s.depth = kv.get(sample_key(i, "depth"));
    s.syn_params.eta = parse_rgb(kv.get(sample_key(i, "syn_eta")));
    s.syn_params.ambient = parse_rgb(kv.get(sample_key(i, "syn_ambient")));
    s.real_params.gamma = parse_rgb(kv.get(sample_key(i, "real_gamma")));
    s.real_params.cast = parse_rgb(kv.get(sample_key(i, "real_cast")));
    s.real_params.blend = kv.get_double(sample_key(i, "real_blend"));
    s.real_params.vignette_strength = kv.get_double(sample_key(i, "real_vignette"));
    m.samples.push_back(std::move(s));
  }
  return m;
}

DatasetManifest build_dataset(uint64_t seed, int64_t count, const std::filesystem::path& out_dir,
                              const DatasetOptions& options) {
  if (count < 4) throw UsageError("dataset count must be >= 4");
  if (options.train_fraction <= 0.0 || options.train_fraction >= 1.0) {
    throw UsageError("train_fraction must lie in (0, 1)");
  }
  std::error_code ec;
  for (const char* sub : {"clean", "syn", "real", "depth"}) {
    std::filesystem::create_directories(out_dir / sub, ec);
    if (ec) throw DataError("cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }

  DatasetManifest m;
  m.seed = seed;
  m.count = count;
  m.options = options;
  m.root = out_dir;
  const int64_t train_count = std::clamp<int64_t>(
      static_cast<int64_t>(std::floor(count * options.train_fraction)), 1, count - 1);

  for (int64_t i = 0; i < count; ++i) {
    const uint64_t sample_seed = derive_seed(seed, static_cast<uint64_t>(i));
    const Scene scene = render_clean_scene(sample_seed, options.height, options.width);
    Rng syn_rng(derive_seed(sample_seed, 1));
    Rng real_rng(derive_seed(sample_seed, 2));

    DatasetSample s;
    char id[24];
    std::snprintf(id, sizeof(id), "%04lld", static_cast<long long>(i));
    s.id = id;
    s.split = i < train_count ? Split::Train : Split::Test;
    s.syn_params = sample_jaffe_params(syn_rng);
    s.real_params = sample_real_proxy_params(real_rng);
    s.clean = std::filesystem::path("clean") / (s.id + ".png");
    s.syn = std::filesystem::path("syn") / (s.id + ".png");
    s.real = std::filesystem::path("real") / (s.id + ".png");
    s.depth = std::filesystem::path("depth") / (s.id + ".png");

    write_png(scene.clean, out_dir / s.clean);
    write_png(degrade_jaffe(scene.clean, scene.depth, s.syn_params), out_dir / s.syn);
    write_png(degrade_real_proxy(scene.clean, s.real_params), out_dir / s.real);
    write_depth_png(scene.depth, out_dir / s.depth);
    m.samples.push_back(std::move(s));
  }
  m.save(out_dir);
  return m;
}

}  // namespace uiess
