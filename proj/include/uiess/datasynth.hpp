#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "uiess/image.hpp"

namespace uiess {

// Attenuation/backscatter model parameters for one synthetic underwater image.
struct DegradationParams {
  Rgb eta{};      // attenuation coefficient per channel, > 0
  Rgb ambient{};  // back-scattered light per channel, in [0, 1]

  void validate() const;
};

// Parameters of the "real-proxy" degradation family (power curve, haze cast, vignette).
struct RealProxyParams {
  Rgb gamma{1.0, 1.0, 1.0};  // in [0.3, 3]
  Rgb cast{};                // in [0, 1]
  double blend = 0.0;
  double vignette_strength = 0.0;

  void validate() const;
};

struct Scene {
  Image clean;
  DepthMap depth;
};

/// Deterministic 64-bit generator used by every seeded path in the project.
using Rng = std::mt19937_64;

/// Mixes a base seed with a stream index (splitmix64 finalizer).
uint64_t derive_seed(uint64_t seed, uint64_t stream);
/// Uniform double in [lo, hi) built from the top 53 bits, independent of stdlib distributions.
double uniform(Rng& rng, double lo, double hi);

Scene render_clean_scene(uint64_t seed, int64_t height, int64_t width);

/// I = J * exp(-eta * d) + A * (1 - exp(-eta * d)), per pixel and channel.
Image degrade_jaffe(const Image& clean, const DepthMap& depth, const DegradationParams& params);

/// clamp(blend * cast + (1 - blend) * clean^gamma) * (1 - strength * r^2), r = radius / corner radius.
Image degrade_real_proxy(const Image& clean, const RealProxyParams& params);

// Sampling distributions for the two degraded domains (documented in docs/dataset.md).
DegradationParams sample_jaffe_params(Rng& rng);
RealProxyParams sample_real_proxy_params(Rng& rng);

enum class Split { Train, Test };

struct DatasetSample {
  std::string id;
  std::filesystem::path clean;  // paths relative to the manifest directory
  std::filesystem::path syn;
  std::filesystem::path real;
  std::filesystem::path depth;
  Split split = Split::Train;
  DegradationParams syn_params;
  RealProxyParams real_params;
};

struct DatasetOptions {
  int64_t height = 64;
  int64_t width = 64;
  double train_fraction = 0.875;
};

struct DatasetManifest {
  static constexpr const char* kFileName = "manifest.txt";
  static constexpr const char* kFormat = "uiess-dataset-v1";

  uint64_t seed = 0;
  int64_t count = 0;
  DatasetOptions options;
  std::filesystem::path root;  // directory holding the manifest; not serialized
  std::vector<DatasetSample> samples;

  std::vector<DatasetSample> split(Split which) const;
  std::filesystem::path resolve(const std::filesystem::path& relative) const { return root / relative; }

  void save(const std::filesystem::path& dir) const;
  /// Accepts either the manifest file or its directory.
  static DatasetManifest load(const std::filesystem::path& path);
};

/// Writes `count` (clean, synthetic, real-proxy, depth) quadruples plus manifest.txt under out_dir.
DatasetManifest build_dataset(uint64_t seed, int64_t count, const std::filesystem::path& out_dir,
                              const DatasetOptions& options = {});

}  // namespace uiess
