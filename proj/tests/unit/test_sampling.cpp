#include <doctest.h>

#include <algorithm>
#include <set>

#include "emadapt/rng.hpp"
#include "emadapt/sampling.hpp"
#include "emadapt/synthdomains.hpp"
#include "helpers.hpp"

using namespace emadapt;

namespace {

std::vector<UncertaintyScore> scores(std::initializer_list<double> us) {
  std::vector<UncertaintyScore> out;
  std::size_t i = 0;
  for (double u : us) {
    out.push_back({i, "s" + std::to_string(i), u, {}});
    ++i;
  }
  return out;
}

DomainPool small_pool(int n) {
  DomainSpec s;
  s.seed = 31;
  DomainPool p = generate_domain(s, n);
  p.reset_to_unlabeled();
  return p;
}

ModelParams small_model() {
  ModelConfig c;
  c.depth = 2;
  c.base_channels = 4;
  c.input_size = 32;
  c.dropout_rate = 0.2;
  return init_model(c, 4);
}

// Points around `centers` with small jitter; ids follow insertion order.
std::vector<std::vector<double>> planted(const std::vector<std::vector<double>>& centers, int per,
                                         std::vector<int>& truth) {
  SeededRng rng(99);
  std::vector<std::vector<double>> out;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (int i = 0; i < per; ++i) {
      std::vector<double> v = centers[c];
      for (auto& x : v) x += 0.05 * rng.normal();
      out.push_back(v);
      truth.push_back(static_cast<int>(c));
    }
  }
  return out;
}

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

}  // namespace

TEST_SUITE("sampling") {

TEST_CASE("names") {
  for (SamplerKind k : all_samplers()) CHECK(parse_sampler(to_string(k)) == k);
  CHECK(parse_sampler("median-uncertainty") == SamplerKind::kMedianUncertainty);
  CHECK(strategy_class(SamplerKind::kRandom) == "Random");
  CHECK(strategy_class(SamplerKind::kMaxUncertainty) == "Uncertainty");
  CHECK(strategy_class(SamplerKind::kClue) == "Uncertainty + Diversity");
  CHECK_ERROR_CODE(parse_sampler("coreset"), ErrorCode::kInvalidConfig);
}

TEST_CASE("every sampler returns distinct unlabeled ids and is deterministic") {
  const DomainPool pool = small_pool(6);
  const ModelParams m = small_model();
  UncertaintyConfig uc;
  uc.k_passes = 2;
  for (SamplerKind k : all_samplers()) {
    CAPTURE(to_string(k));
    const Selection all = sample(k, m, pool, 6, uc, 3);
    std::set<std::size_t> got(all.indices.begin(), all.indices.end());
    CHECK(got.size() == 6);
    CHECK(*got.rbegin() == 5);
    const Selection two = sample(k, m, pool, 2, uc, 3);
    CHECK(two.indices.size() == 2);
    CHECK(two.indices == sample(k, m, pool, 2, uc, 3).indices);
    CHECK_ERROR_CODE(sample(k, m, pool, 0, uc, 3), ErrorCode::kInvalidBatch);
    CHECK_ERROR_CODE(sample(k, m, pool, 7, uc, 3), ErrorCode::kPoolExhausted);
  }
}

TEST_CASE("samplers skip labeled images") {
  DomainPool pool = small_pool(5);
  const std::vector<std::size_t> taken{1, 3};
  pool.mark_labeled(taken);
  UncertaintyConfig uc;
  uc.k_passes = 2;
  for (SamplerKind k : all_samplers()) {
    const Selection s = sample(k, small_model(), pool, 3, uc, 1);
    std::vector<std::size_t> got = s.indices;
    std::sort(got.begin(), got.end());
    CHECK(got == std::vector<std::size_t>{0, 2, 4});
  }
}

TEST_CASE("median window") {
  const auto asc = scores({0.1, 0.2, 0.3, 0.4, 0.5});
  CHECK(sample_median_uncertainty(asc, 1) == std::vector<std::size_t>{2});
  CHECK(sample_median_uncertainty(asc, 2) == std::vector<std::size_t>{1, 2});
  CHECK(sample_median_uncertainty(asc, 5).size() == 5);
}

TEST_CASE("rank-based selection on unsorted scores") {
  const auto s = scores({0.4, 0.1, 0.5, 0.3, 0.2});
  CHECK(select_by_uncertainty_rank(s, SamplerKind::kMinUncertainty, 2) ==
        std::vector<std::size_t>{1, 4});
  auto mx = select_by_uncertainty_rank(s, SamplerKind::kMaxUncertainty, 2);
  std::sort(mx.begin(), mx.end());
  CHECK(mx == std::vector<std::size_t>{0, 2});
  CHECK(select_by_uncertainty_rank(s, SamplerKind::kMedianUncertainty, 1) ==
        std::vector<std::size_t>{3});
}

TEST_CASE("badge first pick is the largest gradient norm") {
  const std::vector<std::vector<double>> e{{0.1, 0.0}, {3.0, 4.0}, {1.0, 1.0}};
  const auto ids = iota_ids(3);
  CHECK(select_badge(e, ids, 1, 0).indices == std::vector<std::size_t>{1});
}

TEST_CASE("badge covers planted clusters") {
  std::vector<int> truth;
  const auto e = planted({{0.0, 0.0}, {10.0, 10.0}}, 5, truth);
  const auto ids = iota_ids(e.size());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Selection s = select_badge(e, ids, 2, seed);
    REQUIRE(s.indices.size() == 2);
    CHECK(truth[s.indices[0]] != truth[s.indices[1]]);
  }
}

TEST_CASE("badge degenerate embeddings fall back to id order") {
  const std::vector<std::vector<double>> e(4, std::vector<double>{1.0, 2.0});
  const std::vector<std::size_t> ids{10, 11, 12, 13};
  const Selection s = select_badge(e, ids, 3, 0);
  CHECK(s.indices == std::vector<std::size_t>{10, 11, 12});
  CHECK(std::find(s.warnings.begin(), s.warnings.end(), "DegenerateEmbeddings") !=
        s.warnings.end());
}

TEST_CASE("clue planted clusters and weights") {
  std::vector<int> truth;
  const auto f = planted({{0.0, 0.0}, {8.0, 0.0}, {0.0, 8.0}}, 6, truth);
  const auto ids = iota_ids(f.size());
  const std::vector<double> ones(f.size(), 1.0);
  const std::vector<double> fives(f.size(), 5.0);
  const Selection s = select_clue(f, ones, ids, 3, 2);
  std::set<int> clusters;
  for (std::size_t i : s.indices) clusters.insert(truth[i]);
  CHECK(clusters.size() == 3);
  CHECK(select_clue(f, fives, ids, 3, 2).indices == s.indices);

  std::vector<double> spike(f.size(), 0.0);
  spike[7] = 1.0;
  CHECK(select_clue(f, spike, ids, 1, 0).indices == std::vector<std::size_t>{7});

  const std::vector<double> zeros(f.size(), 0.0);
  const Selection z = select_clue(f, zeros, ids, 2, 0);
  CHECK(z.indices.size() == 2);
  CHECK(std::find(z.warnings.begin(), z.warnings.end(), "ZeroWeights") != z.warnings.end());
}

}
