#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uiess/datasynth.hpp"
#include "uiess/model.hpp"

namespace uiess {

/// z + alpha * (z_clean - z). Exact endpoints: alpha = 0 returns z, alpha = 1 returns z_clean.
/// Tagged Clean at 1, z's tag at 0, Interp otherwise. Alpha outside [0, 1] extrapolates.
StyleLatent manipulate_style(const StyleLatent& z, const StyleLatent& z_clean, double alpha);

enum class LatentTag { Syn, Real, CleanFromSyn, CleanFromReal };
std::string to_string(LatentTag tag);
LatentTag parse_latent_tag(const std::string& name);

struct LatentRecord {
  std::string id;
  LatentTag tag = LatentTag::Syn;
  std::vector<double> values;
};

struct LatentCollection {
  std::vector<LatentRecord> records;

  /// Header `id,tag,z0..z{d-1}`; reals in shortest round-trip form.
  std::string to_csv() const;
  static LatentCollection from_csv(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static LatentCollection load(const std::filesystem::path& path);

  size_t dimension() const { return records.empty() ? 0 : records.front().values.size(); }
  size_t count(LatentTag tag) const;
};

/// Four latents per sample: SYN and REAL styles and their transformed clean styles.
/// `split` restricts to one split; nullopt harvests every sample.
LatentCollection harvest_latents(UiessModelImpl& model, const DatasetManifest& manifest,
                                 std::optional<Split> split = std::nullopt);

/// Mean silhouette coefficient with Euclidean distance. Points in singleton clusters score 0.
/// Returns nullopt when fewer than two labels are present or every point coincides.
std::optional<double> silhouette(const std::vector<std::vector<double>>& points, const std::vector<int>& labels);

/// Spearman rank correlation (average ranks for ties). nullopt when either side is constant.
std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b);

struct EmbeddingResult {
  std::vector<std::array<double, 2>> coords;  // one per record, in collection order
  /// Over {SYN, REAL, CLEAN} with both clean tags merged, in the native latent space.
  double silhouette_merged = 0.0;
  /// Over all four tags.
  double silhouette_tags = 0.0;
  double clean_centroid_distance = 0.0;     // |c(CLEAN_FROM_SYN) - c(CLEAN_FROM_REAL)|
  double degraded_centroid_distance = 0.0;  // |c(SYN) - c(REAL)|
  bool degenerate = false;                  // silhouettes undefined (all latents coincide)

  std::string to_csv(const LatentCollection& col) const;
  std::string summary_json() const;
};

/// Principal-plane projection for display plus separation statistics. Requires at least three
/// latents per tag. The projection has no stochastic part, so `seed` does not change the output.
EmbeddingResult embed_and_score(const LatentCollection& col, uint64_t seed = 0);

}  // namespace uiess
