#include "uiess/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "uiess/errors.hpp"
#include "uiess/kvfile.hpp"
#include "uiess/losses.hpp"

namespace uiess {

namespace {

// Row-major H×W plane.
struct Plane {
  int64_t h = 0, w = 0;
  std::vector<double> v;
  double& at(int64_t r, int64_t c) { return v[r * w + c]; }
  double at(int64_t r, int64_t c) const { return v[r * w + c]; }
};

Plane channel_plane(const Image& img, int c, double scale) {
  Plane p{img.height(), img.width(), {}};
  auto t = (img.tensor()[c] * scale).contiguous();
  p.v.assign(t.data_ptr<double>(), t.data_ptr<double>() + t.numel());
  return p;
}

int64_t reflect(int64_t i, int64_t n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - i - 1;
  return i;
}

// Sobel gradient magnitude, half-sample symmetric border.
Plane sobel_magnitude(const Plane& p) {
  Plane out{p.h, p.w, std::vector<double>(p.v.size())};
  for (int64_t r = 0; r < p.h; ++r) {
    for (int64_t c = 0; c < p.w; ++c) {
      auto px = [&](int64_t dr, int64_t dc) { return p.at(reflect(r + dr, p.h), reflect(c + dc, p.w)); };
      const double gy = (px(1, -1) + 2 * px(1, 0) + px(1, 1)) - (px(-1, -1) + 2 * px(-1, 0) + px(-1, 1));
      const double gx = (px(-1, 1) + 2 * px(0, 1) + px(1, 1)) - (px(-1, -1) + 2 * px(0, -1) + px(1, -1));
      out.at(r, c) = std::hypot(gx, gy);
    }
  }
  return out;
}

// Enhancement measure: 2/(k1 k2) * sum log(max/min) over blocks; blocks with a zero extreme contribute 0.
double eme(const Plane& p, int64_t block) {
  const int64_t k1 = p.w / block, k2 = p.h / block;
  double total = 0;
  for (int64_t by = 0; by < k2; ++by) {
    for (int64_t bx = 0; bx < k1; ++bx) {
      double lo = 1e300, hi = -1e300;
      for (int64_t r = by * block; r < (by + 1) * block; ++r) {
        for (int64_t c = bx * block; c < (bx + 1) * block; ++c) {
          lo = std::min(lo, p.at(r, c));
          hi = std::max(hi, p.at(r, c));
        }
      }
      if (lo > 0.0 && hi > 0.0) total += std::log(hi / lo);
    }
  }
  return 2.0 / static_cast<double>(k1 * k2) * total;
}

// Alpha-trimmed mean with equal trims on both tails.
double trimmed_mean(std::vector<double> x, double trim) {
  std::sort(x.begin(), x.end());
  const auto k = static_cast<int64_t>(x.size());
  const auto lo = static_cast<int64_t>(std::ceil(trim * k));
  const auto hi = static_cast<int64_t>(std::floor(trim * k));
  double sum = 0;
  for (int64_t i = lo; i < k - hi; ++i) sum += x[i];
  return sum / static_cast<double>(k - lo - hi);
}

double spread(const std::vector<double>& x, double mu) {
  double s = 0;
  for (double v : x) s += (v - mu) * (v - mu);
  return s / static_cast<double>(x.size());
}

double uicm(const Plane& r, const Plane& g, const Plane& b) {
  std::vector<double> rg(r.v.size()), yb(r.v.size());
  for (size_t i = 0; i < rg.size(); ++i) {
    rg[i] = r.v[i] - g.v[i];
    yb[i] = 0.5 * (r.v[i] + g.v[i]) - b.v[i];
  }
  const double mu_rg = trimmed_mean(rg, kUicmTrim), mu_yb = trimmed_mean(yb, kUicmTrim);
  const double s_rg = spread(rg, mu_rg), s_yb = spread(yb, mu_yb);
  return -0.0268 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) + 0.1586 * std::sqrt(s_rg + s_yb);
}

double uism(const Plane& r, const Plane& g, const Plane& b) {
  auto edge = [](const Plane& p) {
    Plane e = sobel_magnitude(p);
    for (size_t i = 0; i < e.v.size(); ++i) e.v[i] *= p.v[i];
    return e;
  };
  return 0.299 * eme(edge(r), kUiqmBlock) + 0.587 * eme(edge(g), kUiqmBlock) + 0.114 * eme(edge(b), kUiqmBlock);
}

// logAMEE over blocks spanning all three channels.
double uiconm(const Plane& r, const Plane& g, const Plane& b) {
  const int64_t block = kUiqmBlock;
  const int64_t k1 = r.w / block, k2 = r.h / block;
  double total = 0;
  for (int64_t by = 0; by < k2; ++by) {
    for (int64_t bx = 0; bx < k1; ++bx) {
      double lo = 1e300, hi = -1e300;
      for (const Plane* p : {&r, &g, &b}) {
        for (int64_t y = by * block; y < (by + 1) * block; ++y) {
          for (int64_t x = bx * block; x < (bx + 1) * block; ++x) {
            lo = std::min(lo, p->at(y, x));
            hi = std::max(hi, p->at(y, x));
          }
        }
      }
      const double top = hi - lo, bot = hi + lo;
      if (top > 0.0 && bot > 0.0) total += (top / bot) * std::log(top / bot);
    }
  }
  return -total / static_cast<double>(k1 * k2);
}

// CIELAB constants (sRGB primaries, D65). White is the matrix row sum so R = G = B maps to a = b = 0.
constexpr double kRgbToXyz[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                                    {0.2126729, 0.7151522, 0.0721750},
                                    {0.0193339, 0.1191920, 0.9503041}};

double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
}

double percentile_nearest_rank(const std::vector<double>& sorted, double q) {
  const auto n = static_cast<double>(sorted.size());
  auto idx = static_cast<int64_t>(std::ceil(q * n)) - 1;
  idx = std::clamp<int64_t>(idx, 0, static_cast<int64_t>(sorted.size()) - 1);
  return sorted[idx];
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw UsageError("psnr: shape mismatch");
  const double mse = (a.tensor() - b.tensor()).pow(2).mean().item<double>();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim_metric(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw UsageError("ssim: shape mismatch");
  return ssim(a.tensor(), b.tensor()).item<double>();
}

UiqmResult uiqm(const Image& img) {
  if (img.height() < 16 || img.width() < 16) throw UsageError("uiqm needs images of at least 16x16");
  const Plane r = channel_plane(img, 0, 255.0), g = channel_plane(img, 1, 255.0), b = channel_plane(img, 2, 255.0);
  UiqmResult out;
  out.uicm = uicm(r, g, b);
  out.uism = uism(r, g, b);
  out.uiconm = uiconm(r, g, b);
  out.uiqm = kUiqmC1 * out.uicm + kUiqmC2 * out.uism + kUiqmC3 * out.uiconm;
  return out;
}

Lab rgb_to_lab(double r, double g, double b) {
  double xyz[3];
  double white[3];
  for (int i = 0; i < 3; ++i) {
    xyz[i] = kRgbToXyz[i][0] * r + kRgbToXyz[i][1] * g + kRgbToXyz[i][2] * b;
    white[i] = kRgbToXyz[i][0] + kRgbToXyz[i][1] + kRgbToXyz[i][2];
  }
  const double fy = lab_f(xyz[1] / white[1]);
  Lab lab{116.0 * fy - 16.0, 0.0, 0.0};
  if (r == g && g == b) return lab;  // exact zero chroma for grays
  lab.a = 500.0 * (lab_f(xyz[0] / white[0]) - fy);
  lab.b = 200.0 * (fy - lab_f(xyz[2] / white[2]));
  return lab;
}

UciqeResult uciqe(const Image& img) {
  const int64_t n = img.height() * img.width();
  auto t = img.tensor();
  auto px = t.accessor<double, 3>();
  std::vector<double> lightness(n), chroma(n);
  double sat_sum = 0;
  for (int64_t r = 0, i = 0; r < img.height(); ++r) {
    for (int64_t c = 0; c < img.width(); ++c, ++i) {
      const Lab lab = rgb_to_lab(px[0][r][c], px[1][r][c], px[2][r][c]);
      // Lightness and chroma on a unit scale (CIELAB units / 100).
      const double l = lab.l / 100.0;
      const double ch = std::hypot(lab.a, lab.b) / 100.0;
      lightness[i] = l;
      chroma[i] = ch;
      const double denom = std::hypot(ch, l);
      sat_sum += denom > 0.0 ? ch / denom : 0.0;
    }
  }
  double mean_c = 0;
  for (double v : chroma) mean_c += v;
  mean_c /= static_cast<double>(n);

  UciqeResult out;
  out.chroma_std = std::sqrt(spread(chroma, mean_c));
  std::sort(lightness.begin(), lightness.end());
  out.luminance_contrast = percentile_nearest_rank(lightness, 0.99) - percentile_nearest_rank(lightness, 0.01);
  out.mean_saturation = sat_sum / static_cast<double>(n);
  out.uciqe = kUciqeC1 * out.chroma_std + kUciqeC2 * out.luminance_contrast + kUciqeC3 * out.mean_saturation;
  return out;
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::Psnr: return "psnr";
    case Metric::Ssim: return "ssim";
    case Metric::Uiqm: return "uiqm";
    case Metric::Uciqe: return "uciqe";
  }
  return "unknown";
}

std::vector<Metric> parse_metrics(const std::string& list) {
  std::vector<Metric> out;
  std::istringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "psnr") out.push_back(Metric::Psnr);
    else if (item == "ssim") out.push_back(Metric::Ssim);
    else if (item == "uiqm") out.push_back(Metric::Uiqm);
    else if (item == "uciqe") out.push_back(Metric::Uciqe);
    else throw UsageError("unknown metric: " + item);
  }
  if (out.empty()) throw UsageError("no metrics requested");
  return out;
}

bool needs_reference(Metric metric) { return metric == Metric::Psnr || metric == Metric::Ssim; }

std::string MetricReport::to_csv() const {
  std::string out = "id";
  for (Metric m : metrics) out += "," + to_string(m);
  out += "\n";
  for (size_t i = 0; i < ids.size(); ++i) {
    out += ids[i];
    for (double v : values[i]) out += "," + format_double(v);
    out += "\n";
  }
  out += "mean";
  for (double v : means) out += "," + format_double(v);
  out += "\n";
  return out;
}

MetricReport MetricReport::from_csv(const std::string& text) {
  MetricReport rep;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty metric report");
  {
    std::istringstream hdr(line);
    std::string col;
    std::getline(hdr, col, ',');
    std::string names;
    while (std::getline(hdr, col, ',')) names += (names.empty() ? "" : ",") + col;
    rep.metrics = parse_metrics(names);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, cell;
    std::getline(row, id, ',');
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != rep.metrics.size()) throw DataError("metric report row has wrong width");
    if (id == "mean") {
      rep.means = vals;
    } else {
      rep.ids.push_back(id);
      rep.values.push_back(vals);
    }
  }
  return rep;
}

MetricReport evaluate_entries(std::vector<EvalEntry> entries, const std::vector<Metric>& metrics) {
  if (entries.empty()) throw DataError("nothing to evaluate: no images found");
  if (metrics.empty()) throw UsageError("no metrics requested");
  std::sort(entries.begin(), entries.end(), [](const EvalEntry& a, const EvalEntry& b) { return a.id < b.id; });
  const bool full_reference = std::any_of(metrics.begin(), metrics.end(), needs_reference);

  MetricReport rep;
  rep.metrics = metrics;
  rep.means.assign(metrics.size(), 0.0);
  for (const auto& e : entries) {
    if (full_reference && !e.reference) throw DataError("missing reference image for " + e.id);
    const Image img = read_png(e.image);
    std::optional<Image> ref;
    if (full_reference) ref = read_png(*e.reference);
    std::vector<double> row;
    for (Metric m : metrics) {
      switch (m) {
        case Metric::Psnr: row.push_back(psnr(img, *ref)); break;
        case Metric::Ssim: row.push_back(ssim_metric(img, *ref)); break;
        case Metric::Uiqm: row.push_back(uiqm(img).uiqm); break;
        case Metric::Uciqe: row.push_back(uciqe(img).uciqe); break;
      }
    }
    for (size_t k = 0; k < row.size(); ++k) rep.means[k] += row[k];
    rep.ids.push_back(e.id);
    rep.values.push_back(std::move(row));
  }
  for (double& m : rep.means) m /= static_cast<double>(entries.size());
  return rep;
}

std::vector<EvalEntry> read_pairs_csv(const std::filesystem::path& csv) {
  std::istringstream in(read_file(csv));
  const auto base = csv.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty pairs file: " + csv.string());
  std::vector<EvalEntry> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, image, reference;
    std::getline(row, id, ',');
    std::getline(row, image, ',');
    std::getline(row, reference, ',');
    if (id.empty() || image.empty()) throw DataError("malformed pairs row: " + line);
    EvalEntry e{id, base / image, std::nullopt};
    if (!reference.empty()) e.reference = base / reference;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<EvalEntry> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<EvalEntry> out;
  for (const auto& f : std::filesystem::directory_iterator(dir)) {
    if (f.is_regular_file() && f.path().extension() == ".png") out.push_back({f.path().stem().string(), f.path(), {}});
  }
  return out;
}

MetricReport evaluate_folder(const std::vector<EvalEntry>& entries, const std::vector<Metric>& metrics,
                             const std::filesystem::path& out) {
  auto rep = evaluate_entries(entries, metrics);
  write_file_atomic(out, rep.to_csv());
  return rep;
}

}  // namespace uiess
