#include "uiess/latentlab.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "uiess/errors.hpp"
#include "uiess/inference.hpp"
#include "uiess/kvfile.hpp"

namespace uiess {

namespace {

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<double> to_vector(const torch::Tensor& row) {
  const auto t = row.to(torch::kFloat64).contiguous();
  return {t.data_ptr<double>(), t.data_ptr<double>() + t.numel()};
}

std::vector<double> centroid(const LatentCollection& col, LatentTag tag) {
  std::vector<double> c(col.dimension(), 0.0);
  size_t n = 0;
  for (const auto& r : col.records) {
    if (r.tag != tag) continue;
    for (size_t i = 0; i < c.size(); ++i) c[i] += r.values[i];
    ++n;
  }
  for (auto& v : c) v /= static_cast<double>(n);
  return c;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

StyleLatent manipulate_style(const StyleLatent& z, const StyleLatent& z_clean, double alpha) {
  if (z.domain != Domain::Syn && z.domain != Domain::Real) throw UsageError("manipulate_style: z must be syn or real");
  if (z_clean.domain != Domain::Clean) throw UsageError("manipulate_style: z_clean must be tagged clean");
  if (z.vector.sizes() != z_clean.vector.sizes()) throw UsageError("manipulate_style: latent length mismatch");
  if (!std::isfinite(alpha)) throw UsageError("manipulate_style: alpha must be finite");
  if (alpha == 0.0) return {z.vector.clone(), z.domain};
  if (alpha == 1.0) return {z_clean.vector.clone(), Domain::Clean};
  return {z.vector + alpha * (z_clean.vector - z.vector), Domain::Interp};
}

std::string to_string(LatentTag tag) {
  switch (tag) {
    case LatentTag::Syn: return "SYN";
    case LatentTag::Real: return "REAL";
    case LatentTag::CleanFromSyn: return "CLEAN_FROM_SYN";
    case LatentTag::CleanFromReal: return "CLEAN_FROM_REAL";
  }
  return "?";
}

LatentTag parse_latent_tag(const std::string& name) {
  for (auto t : {LatentTag::Syn, LatentTag::Real, LatentTag::CleanFromSyn, LatentTag::CleanFromReal}) {
    if (to_string(t) == name) return t;
  }
  throw DataError("unknown latent tag: " + name);
}

size_t LatentCollection::count(LatentTag tag) const {
  return static_cast<size_t>(std::count_if(records.begin(), records.end(), [&](const auto& r) { return r.tag == tag; }));
}

std::string LatentCollection::to_csv() const {
  std::ostringstream out;
  out << "id,tag";
  for (size_t i = 0; i < dimension(); ++i) out << ",z" << i;
  out << "\n";
  for (const auto& r : records) {
    out << r.id << "," << to_string(r.tag);
    for (double v : r.values) out << "," << format_double(v);
    out << "\n";
  }
  return out.str();
}

LatentCollection LatentCollection::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("id,tag")) throw DataError("latent CSV lacks its header");
  const auto dim = static_cast<size_t>(std::count(line.begin(), line.end(), ',') - 1);
  LatentCollection col;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    LatentRecord r;
    std::getline(row, r.id, ',');
    std::getline(row, cell, ',');
    r.tag = parse_latent_tag(cell);
    while (std::getline(row, cell, ',')) {
      size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
      }
      if (used == 0 || used != cell.size()) throw DataError("latent CSV has a non-numeric value: " + cell);
      r.values.push_back(v);
    }
    if (r.values.size() != dim) throw DataError("latent CSV row has the wrong width: " + r.id);
    col.records.push_back(std::move(r));
  }
  return col;
}

void LatentCollection::save(const std::filesystem::path& path) const { write_file_atomic(path, to_csv()); }

LatentCollection LatentCollection::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("latent file not found: " + path.string());
  return from_csv(read_file(path));
}

LatentCollection harvest_latents(UiessModelImpl& model, const DatasetManifest& manifest, std::optional<Split> split) {
  LatentCollection col;
  for (const auto& s : manifest.samples) {
    if (split && s.split != *split) continue;
    const auto syn = encode_image(model, read_png(manifest.resolve(s.syn)), Domain::Syn);
    const auto real = encode_image(model, read_png(manifest.resolve(s.real)), Domain::Real);
    col.records.push_back({s.id, LatentTag::Syn, to_vector(syn.style.vector[0])});
    col.records.push_back({s.id, LatentTag::Real, to_vector(real.style.vector[0])});
    col.records.push_back({s.id, LatentTag::CleanFromSyn, to_vector(syn.clean_style.vector[0])});
    col.records.push_back({s.id, LatentTag::CleanFromReal, to_vector(real.clean_style.vector[0])});
  }
  if (col.records.empty()) throw DataError("no samples to harvest latents from");
  return col;
}

std::optional<double> silhouette(const std::vector<std::vector<double>>& points, const std::vector<int>& labels) {
  if (points.size() != labels.size()) throw UsageError("silhouette: points and labels differ in length");
  std::map<int, std::vector<size_t>> groups;
  for (size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  if (groups.size() < 2) return std::nullopt;

  bool all_same = true;
  for (size_t i = 1; i < points.size() && all_same; ++i) all_same = distance(points[0], points[i]) == 0.0;
  if (all_same) return std::nullopt;

  double total = 0.0;
  for (size_t i = 0; i < points.size(); ++i) {
    const auto& own = groups.at(labels[i]);
    if (own.size() < 2) continue;
    double a = 0.0;
    for (size_t j : own) a += distance(points[i], points[j]);
    a /= static_cast<double>(own.size() - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, members] : groups) {
      if (label == labels[i]) continue;
      double d = 0.0;
      for (size_t j : members) d += distance(points[i], points[j]);
      b = std::min(b, d / static_cast<double>(members.size()));
    }
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(points.size());
}

std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw UsageError("spearman: need two equal-length series of size >= 2");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

EmbeddingResult embed_and_score(const LatentCollection& col, uint64_t /*seed*/) {
  for (auto t : {LatentTag::Syn, LatentTag::Real, LatentTag::CleanFromSyn, LatentTag::CleanFromReal}) {
    if (col.count(t) < 3) throw DataError("embed_and_score: fewer than 3 latents tagged " + to_string(t));
  }
  const size_t n = col.records.size(), d = col.dimension();
  std::vector<std::vector<double>> points;
  std::vector<int> merged, tags;
  auto x = torch::empty({static_cast<int64_t>(n), static_cast<int64_t>(d)}, torch::kFloat64);
  for (size_t i = 0; i < n; ++i) {
    const auto& r = col.records[i];
    if (r.values.size() != d) throw DataError("latent collection mixes dimensions");
    points.push_back(r.values);
    tags.push_back(static_cast<int>(r.tag));
    merged.push_back(r.tag == LatentTag::CleanFromReal ? static_cast<int>(LatentTag::CleanFromSyn) : tags.back());
    for (size_t k = 0; k < d; ++k) x[static_cast<int64_t>(i)][static_cast<int64_t>(k)] = r.values[k];
  }

  EmbeddingResult res;
  const auto sm = silhouette(points, merged), st = silhouette(points, tags);
  res.degenerate = !sm || !st;
  res.silhouette_merged = sm.value_or(0.0);
  res.silhouette_tags = st.value_or(0.0);
  res.clean_centroid_distance =
      distance(centroid(col, LatentTag::CleanFromSyn), centroid(col, LatentTag::CleanFromReal));
  res.degraded_centroid_distance = distance(centroid(col, LatentTag::Syn), centroid(col, LatentTag::Real));

  const auto centered = x - x.mean(0, true);
  const auto cov = centered.t().matmul(centered) / static_cast<double>(n);
  auto [evals, evecs] = torch::linalg_eigh(cov, "L");
  // eigh sorts ascending: the last two columns span the principal plane.
  auto basis = evecs.narrow(1, d - 2, 2).flip({1}).clone();
  for (int64_t c = 0; c < 2; ++c) {
    auto col_vec = basis.select(1, c);
    const auto idx = col_vec.abs().argmax().item<int64_t>();
    if (col_vec[idx].item<double>() < 0) col_vec.neg_();
  }
  const auto proj = centered.matmul(basis).contiguous();
  const double* p = proj.data_ptr<double>();
  for (size_t i = 0; i < n; ++i) res.coords.push_back({p[2 * i], p[2 * i + 1]});
  return res;
}

std::string EmbeddingResult::to_csv(const LatentCollection& col) const {
  std::ostringstream out;
  out << "id,tag,x,y\n";
  for (size_t i = 0; i < coords.size(); ++i) {
    out << col.records[i].id << "," << to_string(col.records[i].tag) << "," << format_double(coords[i][0]) << ","
        << format_double(coords[i][1]) << "\n";
  }
  return out.str();
}

std::string EmbeddingResult::summary_json() const {
  nlohmann::json j{{"silhouette_merged", silhouette_merged},
                   {"silhouette_tags", silhouette_tags},
                   {"clean_centroid_distance", clean_centroid_distance},
                   {"degraded_centroid_distance", degraded_centroid_distance},
                   {"degenerate", degenerate}};
  return j.dump(2) + "\n";
}

}  // namespace uiess
