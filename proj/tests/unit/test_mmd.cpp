#include <doctest.h>

#include <cmath>

#include "emadapt/mmd.hpp"
#include "emadapt/rng.hpp"
#include "emadapt/synthdomains.hpp"
#include "helpers.hpp"

using namespace emadapt;

namespace {

std::vector<EmbeddingVec> points_1d(std::initializer_list<double> xs) {
  std::vector<EmbeddingVec> out;
  for (double x : xs) out.emplace_back(std::vector<double>{x});
  return out;
}

std::vector<EmbeddingVec> gaussian(SeededRng& rng, int n, int d, double shift) {
  std::vector<EmbeddingVec> out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> v(static_cast<std::size_t>(d));
    for (auto& x : v) x = rng.normal() + shift;
    out.emplace_back(std::move(v));
  }
  return out;
}

// Direct double-loop estimators.
double oracle_mmd2(const std::vector<EmbeddingVec>& x, const std::vector<EmbeddingVec>& y,
                   double sigma, bool unbiased) {
  auto k = [sigma](const EmbeddingVec& a, const EmbeddingVec& b) {
    long double d2 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-d2 / (2.0L * sigma * sigma));
  };
  const long double m = static_cast<long double>(x.size());
  const long double n = static_cast<long double>(y.size());
  long double xx = 0, yy = 0, xy = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      if (!unbiased || i != j) xx += k(x[i], x[j]);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (!unbiased || i != j) yy += k(y[i], y[j]);
  for (const auto& a : x)
    for (const auto& b : y) xy += k(a, b);
  if (unbiased) return static_cast<double>(xx / (m * (m - 1)) + yy / (n * (n - 1)) - 2 * xy / (m * n));
  return static_cast<double>(xx / (m * m) + yy / (n * n) - 2 * xy / (m * n));
}

DistanceMatrix toy_matrix() {
  DistanceMatrix m;
  m.names = {"S1", "S2", "S3", "T"};
  m.entries = {{0, 1, 1, 0.5}, {1, 0, 1, 0.2}, {1, 1, 0, 0.9}, {0.5, 0.2, 0.9, 0}};
  return m;
}

}  // namespace

TEST_SUITE("mmd") {

TEST_CASE("rbf kernel values") {
  const EmbeddingVec x({1.0, 2.0});
  const EmbeddingVec y({2.0, 3.0});  // squared distance 2
  CHECK(rbf_kernel(x, x, 0.7) == 1.0);
  CHECK(rbf_kernel(x, y, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(rbf_kernel(x, y, 1.0) == rbf_kernel(y, x, 1.0));
}

TEST_CASE("median heuristic") {
  CHECK(median_heuristic(points_1d({0, 2})) == 2.0);
  CHECK(median_heuristic(points_1d({0, 1, 3})) == 2.0);
  // distances {1, 2, 3, 4, 6, 7}: even count, mean of the middle two
  CHECK(median_heuristic(points_1d({0, 1, 3, 7})) == 3.5);
  std::vector<EmbeddingVec> same(200, EmbeddingVec({1.0, 1.0}));
  CHECK_ERROR_CODE(median_heuristic(same), ErrorCode::kDegenerateDistances);
}

TEST_CASE("identical sample lists give exactly zero") {
  SeededRng rng(1);
  const auto x = gaussian(rng, 30, 4, 0.0);
  CHECK(mmd2(x, x, {}).value == 0.0);
  KernelConfig fixed{1.5};
  CHECK(mmd2(x, x, fixed).value == 0.0);
}

TEST_CASE("singleton closed form") {
  const auto x = points_1d({0.0});
  const auto y = points_1d({2.0});
  const KernelConfig k{std::sqrt(2.0)};  // |x - y|^2 = 2 sigma^2
  CHECK(std::abs(mmd2(x, y, k).value - (2.0 - 2.0 * std::exp(-1.0))) <= 1e-12);
}

TEST_CASE("estimators agree with the double-loop oracle") {
  SeededRng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = gaussian(rng, 5 + trial, 3, 0.0);
    const auto y = gaussian(rng, 7, 3, 0.4 * trial);
    const KernelConfig k{1.3};
    CHECK(std::abs(mmd2(x, y, k).value - std::max(0.0, oracle_mmd2(x, y, 1.3, false))) <= 1e-12);
    CHECK(std::abs(mmd2(x, y, k, MmdEstimator::kUnbiased).value - oracle_mmd2(x, y, 1.3, true)) <=
          1e-12);
    const MmdResult med = mmd2(x, y, {});
    CHECK(std::abs(med.value - std::max(0.0, oracle_mmd2(x, y, med.sigma, false))) <= 1e-12);
  }
}

TEST_CASE("mmd grows with the mean shift") {
  double prev = -1.0;
  for (double shift : {0.0, 1.0, 2.0, 4.0}) {
    SeededRng rng(2024);
    const auto x = gaussian(rng, 500, 1, 0.0);
    const auto y = gaussian(rng, 500, 1, shift);
    const double v = mmd2(x, y, {}).value;
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("empty sets are rejected") {
  const auto x = points_1d({1.0});
  const std::vector<EmbeddingVec> none;
  CHECK_ERROR_CODE(mmd2(x, none, KernelConfig{1.0}), ErrorCode::kEmptySet);
  const std::vector<EmbeddingVec> wide{EmbeddingVec({1.0, 2.0})};
  CHECK_ERROR_CODE(mmd2(x, wide, KernelConfig{1.0}), ErrorCode::kLengthMismatch);
  CHECK_ERROR_CODE(KernelConfig{-1.0}.validate(), ErrorCode::kInvalidConfig);
}

TEST_CASE("pairwise sum is exact on integers") {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  CHECK(pairwise_sum(v) == 999.0 * 1000.0 / 2.0);
  CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("subsample indices") {
  const auto a = subsample_indices(100, 10, 3);
  CHECK(a.size() == 10);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(a == subsample_indices(100, 10, 3));
  CHECK(subsample_indices(5, 10, 3) == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("domain matrix structure") {
  const Benchmark b = make_benchmark(std::vector<int>{2, 1}, 11, 64);
  const auto pools = generate_benchmark(b, 8);
  ModelConfig c;
  c.depth = 2;
  c.base_channels = 4;
  c.input_size = 32;
  std::vector<ModelParams> models{init_model(c, 1), init_model(c, 2), init_model(c, 3)};
  const DistanceMatrix m = domain_distance_matrix(pools, models, {}, 8, 0);
  REQUIRE(m.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(m.entries[i][i] == 0.0);
  CHECK(m.entries[0][1] != m.entries[1][0]);
  // A1 and A2 are siblings, B1 is the outlier.
  CHECK(m.entries[0][1] < m.entries[0][2]);
  CHECK(m.entries[1][0] < m.entries[2][0]);
  CHECK(m.embedder_ids[1] == models[1].hash());
  const DistanceMatrix back = matrix_from_csv(matrix_to_csv(m));
  CHECK(back.names == m.names);
  CHECK(back.entries == m.entries);
  const std::vector<ModelParams> short_models{models[0]};
  CHECK_ERROR_CODE(domain_distance_matrix(pools, short_models, {}, 8, 0),
                   ErrorCode::kMissingModel);
}

TEST_CASE("optimal source selection") {
  const DistanceMatrix m = toy_matrix();
  const std::vector<std::string> all{"S1", "S2", "S3"};
  CHECK(select_optimal_source(m, "T", all) == "S2");
  CHECK(select_worst_source(m, "T", all) == "S3");
  const std::vector<std::string> one{"S3"};
  CHECK(select_optimal_source(m, "T", one) == "S3");
  DistanceMatrix tie = m;
  tie.entries[0][3] = 0.3;
  tie.entries[1][3] = 0.3;
  CHECK(select_optimal_source(tie, "T", all) == "S1");
  const std::vector<std::string> none;
  CHECK_ERROR_CODE(select_optimal_source(m, "T", none), ErrorCode::kEmptyCandidates);
  CHECK_ERROR_CODE(select_optimal_source(m, "Q", all), ErrorCode::kUnknownDomain);
}

}
