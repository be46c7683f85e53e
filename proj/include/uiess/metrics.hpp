#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uiess/image.hpp"

namespace uiess {

/// Reported instead of +inf when two images are identical.
inline constexpr double kPsnrCap = 99.0;

double psnr(const Image& a, const Image& b);
/// Full-reference SSIM; the same routine the training loss uses (window 7, box filter).
double ssim_metric(const Image& a, const Image& b);

struct UiqmResult {
  double uicm = 0;
  double uism = 0;
  double uiconm = 0;
  double uiqm = 0;
};

// Published combination weights.
inline constexpr double kUiqmC1 = 0.0282, kUiqmC2 = 0.2953, kUiqmC3 = 3.5753;
inline constexpr int64_t kUiqmBlock = 8;
inline constexpr double kUicmTrim = 0.1;

/// Colorfulness, sharpness and contrast measure for underwater images; needs H, W >= 16.
UiqmResult uiqm(const Image& img);

struct UciqeResult {
  double chroma_std = 0;
  double luminance_contrast = 0;
  double mean_saturation = 0;
  double uciqe = 0;
};

inline constexpr double kUciqeC1 = 0.4680, kUciqeC2 = 0.2745, kUciqeC3 = 0.2576;

/// Chroma spread, lightness contrast (99th minus 1st percentile) and mean saturation in CIELCh.
UciqeResult uciqe(const Image& img);

struct Lab {
  double l, a, b;
};
/// RGB (treated as linear, D65 white) to CIELAB. Achromatic inputs map to a = b = 0 exactly.
Lab rgb_to_lab(double r, double g, double b);

enum class Metric { Psnr, Ssim, Uiqm, Uciqe };
std::string to_string(Metric metric);
/// Comma-separated list, e.g. "psnr,ssim".
std::vector<Metric> parse_metrics(const std::string& list);
bool needs_reference(Metric metric);

struct EvalEntry {
  std::string id;
  std::filesystem::path image;
  std::optional<std::filesystem::path> reference;
};

struct MetricReport {
  std::vector<Metric> metrics;
  std::vector<std::string> ids;             // sorted
  std::vector<std::vector<double>> values;  // values[row][metric]
  std::vector<double> means;

  std::string to_csv() const;
  static MetricReport from_csv(const std::string& text);
};

MetricReport evaluate_entries(std::vector<EvalEntry> entries, const std::vector<Metric>& metrics);

/// Reads `id,image[,reference]` rows (header required); relative paths resolve against the CSV's directory.
std::vector<EvalEntry> read_pairs_csv(const std::filesystem::path& csv);
/// Every *.png in a directory, id = file stem.
std::vector<EvalEntry> list_images(const std::filesystem::path& dir);

/// Evaluates and writes the CSV report to `out`.
MetricReport evaluate_folder(const std::vector<EvalEntry>& entries, const std::vector<Metric>& metrics,
                             const std::filesystem::path& out);

}  // namespace uiess
