#include "doctest_torch.hpp"

#include <cmath>
#include <map>
#include <random>

#include "test_util.hpp"
#include "uiess/errors.hpp"
#include "uiess/latentlab.hpp"

using namespace uiess;
using testutil::TempDir;

namespace {

StyleLatent latent(std::vector<double> v, Domain d) {
  return {torch::tensor(v, torch::kFloat64).unsqueeze(0), d};
}

// Textbook silhouette over a distance matrix.
double silhouette_oracle(const std::vector<std::vector<double>>& p, const std::vector<int>& lab) {
  auto dist = [&](size_t i, size_t j) {
    double s = 0;
    for (size_t k = 0; k < p[i].size(); ++k) s += (p[i][k] - p[j][k]) * (p[i][k] - p[j][k]);
    return std::sqrt(s);
  };
  double total = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    std::map<int, std::pair<double, int>> per;
    for (size_t j = 0; j < p.size(); ++j) {
      if (j == i) continue;
      auto& e = per[lab[j]];
      e.first += dist(i, j);
      e.second += 1;
    }
    if (!per.count(lab[i])) continue;
    const double a = per[lab[i]].first / per[lab[i]].second;
    double b = 1e300;
    for (const auto& [l, e] : per) {
      if (l != lab[i]) b = std::min(b, e.first / e.second);
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(p.size());
}

LatentCollection synthetic_collection(double spread, uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, spread);
  const std::array<std::vector<double>, 4> centers = {
      std::vector<double>{3, 0, 0, 0}, {-3, 0, 0, 0}, {0, 3, 0, 0}, {0, 3.1, 0, 0}};
  LatentCollection c;
  for (int i = 0; i < 6; ++i) {
    for (int t = 0; t < 4; ++t) {
      LatentRecord r{"s" + std::to_string(i), static_cast<LatentTag>(t), centers[t]};
      for (auto& v : r.values) v += n(gen);
      c.records.push_back(r);
    }
  }
  return c;
}

}  // namespace

TEST_CASE("manipulate_style examples") {
  const auto z = latent({1, 2, 3}, Domain::Syn);
  const auto zc = latent({3, 2, 1}, Domain::Clean);
  const auto a0 = manipulate_style(z, zc, 0.0);
  CHECK(torch::equal(a0.vector, z.vector));
  CHECK(a0.domain == Domain::Syn);
  const auto a1 = manipulate_style(z, zc, 1.0);
  CHECK(torch::equal(a1.vector, zc.vector));
  CHECK(a1.domain == Domain::Clean);
  const auto half = manipulate_style(z, zc, 0.5);
  CHECK(half.domain == Domain::Interp);
  CHECK(torch::equal(half.vector, torch::tensor({2.0, 2.0, 2.0}, torch::kFloat64).unsqueeze(0)));
  const auto mid = manipulate_style(latent(std::vector<double>(8, 0.0), Domain::Real),
                                    latent(std::vector<double>(8, 1.0), Domain::Clean), 0.5);
  CHECK(torch::equal(mid.vector, torch::full({1, 8}, 0.5, torch::kFloat64)));
  const auto ext = manipulate_style(z, zc, 1.5);
  CHECK(testutil::max_abs_diff(ext.vector, torch::tensor({4.0, 2.0, 0.0}, torch::kFloat64).unsqueeze(0)) < 1e-15);

  CHECK_THROWS_AS(manipulate_style(z, latent({1, 2}, Domain::Clean), 0.5), UsageError);
  CHECK_THROWS_AS(manipulate_style(zc, zc, 0.5), UsageError);
  CHECK_THROWS_AS(manipulate_style(z, z, 0.5), UsageError);
  CHECK_THROWS_AS(manipulate_style(z, zc, std::nan("")), UsageError);
}

TEST_CASE("manipulate_style is affine in alpha") {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  torch::manual_seed(9);
  for (int k = 0; k < 50; ++k) {
    const StyleLatent z{torch::randn({1, 8}, torch::kFloat64), Domain::Real};
    const StyleLatent zc{torch::randn({1, 8}, torch::kFloat64), Domain::Clean};
    const double a = u(gen), b = u(gen), t = u(gen);
    const auto lhs = manipulate_style(z, zc, t * a + (1 - t) * b).vector;
    const auto rhs = t * manipulate_style(z, zc, a).vector + (1 - t) * manipulate_style(z, zc, b).vector;
    CHECK(testutil::max_abs_diff(lhs, rhs) < 1e-12);
  }
}

TEST_CASE("latent tags") {
  for (auto t : {LatentTag::Syn, LatentTag::Real, LatentTag::CleanFromSyn, LatentTag::CleanFromReal}) {
    CHECK(parse_latent_tag(to_string(t)) == t);
  }
  CHECK(to_string(LatentTag::CleanFromReal) == "CLEAN_FROM_REAL");
  CHECK_THROWS_AS(parse_latent_tag("CLEAN"), DataError);
}

TEST_CASE("silhouette against the textbook definition") {
  std::vector<std::vector<double>> pts = {{0, 0}, {0, 1}, {1, 0}, {5, 5}, {5, 6}, {9, 0}, {9, 1}};
  std::vector<int> lab = {0, 0, 0, 1, 1, 2, 2};
  CHECK(*silhouette(pts, lab) == doctest::Approx(silhouette_oracle(pts, lab)).epsilon(1e-12));

  pts.push_back({4, 4});
  lab.push_back(3);  // singleton scores 0
  CHECK(*silhouette(pts, lab) == doctest::Approx(silhouette_oracle(pts, lab)).epsilon(1e-12));

  // Groups at (0,...,0) and (1,...,1) with tiny jitter.
  std::mt19937_64 gen(3);
  std::normal_distribution<double> jitter(0.0, 0.01);
  std::vector<std::vector<double>> groups;
  std::vector<int> glab;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> v(8, i % 2 ? 1.0 : 0.0);
    for (auto& x : v) x += jitter(gen);
    groups.push_back(v);
    glab.push_back(i % 2);
  }
  CHECK(*silhouette(groups, glab) > 0.9);

  std::vector<std::vector<double>> two = {{0, 0}, {0.1, 0}, {10, 0}, {10.1, 0}};

  CHECK_FALSE(silhouette(two, {1, 1, 1, 1}).has_value());
  CHECK_FALSE(silhouette({{1, 1}, {1, 1}, {1, 1}}, {0, 1, 0}).has_value());
}

TEST_CASE("spearman examples") {
  CHECK(*spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(*spearman({1, 2, 3, 4}, {4, 1, 0, -3}) == doctest::Approx(-1.0));
  // Ranks (1,2,3,4,5) vs (4,5,3,2,1): 1 - 6*38/120.
  CHECK(*spearman({0, 0.25, 0.5, 0.75, 1}, {0.257, 0.328, 0.246, 0.177, 0.148}) == doctest::Approx(-0.9));
  // Ties take the average rank: y ranks (1.5, 1.5, 3).
  CHECK(*spearman({1, 2, 3}, {5, 5, 7}) == doctest::Approx(std::sqrt(3.0) / 2.0));
  CHECK_FALSE(spearman({1, 2, 3}, {2, 2, 2}).has_value());
  CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), UsageError);
}

TEST_CASE("latent CSV round trip is exact") {
  TempDir d;
  auto c = synthetic_collection(0.3, 1);
  c.records[0].values[0] = 0.1 + 0.2;
  c.save(d / "l.csv");
  const auto back = LatentCollection::load(d / "l.csv");
  REQUIRE(back.records.size() == c.records.size());
  for (size_t i = 0; i < c.records.size(); ++i) {
    CHECK(back.records[i].id == c.records[i].id);
    CHECK(back.records[i].tag == c.records[i].tag);
    CHECK(back.records[i].values == c.records[i].values);
  }
  CHECK(back.to_csv() == c.to_csv());
  CHECK(c.to_csv().rfind("id,tag,z0,z1,z2,z3\n", 0) == 0);
  CHECK_THROWS_AS(LatentCollection::from_csv("id,tag,z0\na,SYN,1,2\n"), DataError);
  CHECK_THROWS_AS(LatentCollection::from_csv("id,tag,z0\na,SYN,abc\n"), DataError);
}

TEST_CASE("embedding separates well-clustered latents") {
  const auto c = synthetic_collection(0.1, 2);
  const auto e = embed_and_score(c, 0);
  CHECK_FALSE(e.degenerate);
  CHECK(e.coords.size() == c.records.size());
  CHECK(e.silhouette_merged > 0.9);
  CHECK(e.clean_centroid_distance < e.degraded_centroid_distance);
  CHECK(e.degraded_centroid_distance == doctest::Approx(6.0).epsilon(0.05));

  std::vector<std::vector<double>> pts;
  std::vector<int> lab;
  for (const auto& r : c.records) {
    pts.push_back(r.values);
    lab.push_back(r.tag == LatentTag::CleanFromReal ? 2 : static_cast<int>(r.tag));
  }
  CHECK(e.silhouette_merged == doctest::Approx(silhouette_oracle(pts, lab)).epsilon(1e-12));

  const auto again = embed_and_score(c, 77);
  CHECK(again.to_csv(c) == e.to_csv(c));
  CHECK(again.summary_json() == e.summary_json());
}

TEST_CASE("embedding flags coincident latents") {
  LatentCollection c;
  for (int i = 0; i < 3; ++i) {
    for (int t = 0; t < 4; ++t) c.records.push_back({"s" + std::to_string(i), static_cast<LatentTag>(t), {1, 1}});
  }
  const auto e = embed_and_score(c);
  CHECK(e.degenerate);
  for (const auto& xy : e.coords) CHECK((std::isfinite(xy[0]) && std::isfinite(xy[1])));

  c.records.resize(8);
  CHECK_THROWS_AS(embed_and_score(c), DataError);
}

TEST_CASE("harvest yields four latents per sample with clean = T(z)") {
  TempDir d;
  DatasetOptions o;
  o.height = 32;
  o.width = 32;
  const auto m = build_dataset(4, 5, d.path(), o);
  torch::manual_seed(0);
  UiessModel model(testutil::tiny_config());
  model->eval();
  const auto col = harvest_latents(*model, m);
  CHECK(col.records.size() == 20);
  for (auto t : {LatentTag::Syn, LatentTag::Real, LatentTag::CleanFromSyn, LatentTag::CleanFromReal}) {
    CHECK(col.count(t) == 5);
  }
  const auto& r = col.records;
  for (size_t i = 0; i < r.size(); i += 4) {
    CHECK(r[i].tag == LatentTag::Syn);
    const auto z = torch::tensor(r[i].values, torch::kFloat32).unsqueeze(0);
    const auto zc = model->transform_style({z, Domain::Syn}).vector.to(torch::kFloat64);
    CHECK(testutil::max_abs_diff(zc, torch::tensor(r[i + 2].values, torch::kFloat64).unsqueeze(0)) < 1e-6);
  }
  const auto test_only = harvest_latents(*model, m, Split::Test);
  CHECK(test_only.records.size() == 4 * m.split(Split::Test).size());
  CHECK(harvest_latents(*model, m).to_csv() == col.to_csv());
}
