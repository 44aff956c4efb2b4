#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "emadapt/rng.hpp"
#include "emadapt/stats.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace emadapt;

namespace {

DistanceMatrix matrix(std::vector<std::string> names, std::vector<std::vector<double>> e) {
  DistanceMatrix m;
  m.names = std::move(names);
  m.entries = std::move(e);
  return m;
}

Clustering make(std::vector<int> a) {
  std::vector<std::string> items;
  for (std::size_t i = 0; i < a.size(); ++i) items.push_back("i" + std::to_string(i));
  return make_clustering(items, a);
}

std::vector<int> random_labels(SeededRng& rng, std::size_t n, std::size_t k) {
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(rng.uniform_index(k));
  return v;
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("symmetrize") {
  const DistanceMatrix m = matrix({"a", "b"}, {{0, 0.4}, {0.6, 0}});
  const DistanceMatrix s = symmetrize(m);
  CHECK(s.entries[0][1] == 0.5);
  CHECK(s.entries[1][0] == 0.5);
  CHECK(symmetrize(s).entries == s.entries);
  SeededRng rng(3);
  DistanceMatrix r = matrix({"a", "b", "c", "d"}, std::vector<std::vector<double>>(4, std::vector<double>(4)));
  for (auto& row : r.entries)
    for (auto& v : row) v = rng.uniform();
  const DistanceMatrix rs = symmetrize(r);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(rs.entries[i][j] == rs.entries[j][i]);
  CHECK_ERROR_CODE(symmetrize(matrix({"a", "b"}, {{0, 1}})), ErrorCode::kNonSquare);
}

TEST_CASE("UPGMA small cases") {
  const Dendrogram two = agglomerative_cluster(matrix({"x", "y"}, {{0, 3}, {3, 0}}));
  REQUIRE(two.merges.size() == 1);
  CHECK(two.merges[0].height == 3.0);

  const DistanceMatrix abc = matrix({"A", "B", "C"}, {{0, 1, 10}, {1, 0, 10}, {10, 10, 0}});
  const Dendrogram d = agglomerative_cluster(abc);
  REQUIRE(d.merges.size() == 2);
  CHECK(d.merges[0].a == 0);
  CHECK(d.merges[0].b == 1);
  CHECK(d.merges[0].height == 1.0);
  CHECK(d.merges[1].height == 10.0);
  CHECK(d.merges[1].size == 3);
  CHECK(d.linkage == "average");

  const Clustering k2 = cut_at_k(d, 2);
  CHECK(k2.assignment == std::vector<int>{0, 0, 1});
  CHECK(cut_at_k(d, 3).k == 3);
  CHECK(cut_at_k(d, 1).assignment == std::vector<int>{0, 0, 0});
  CHECK_ERROR_CODE(cut_at_k(d, 4), ErrorCode::kOutOfRange);
}

TEST_CASE("UPGMA uses average linkage") {
  // After {A,B} merges, d({A,B},C) = (4 + 8) / 2 = 6 < d(C,D) = 7.
  const DistanceMatrix m = matrix({"A", "B", "C", "D"},
                                  {{0, 1, 4, 20}, {1, 0, 8, 20}, {4, 8, 0, 7}, {20, 20, 7, 0}});
  const Dendrogram d = agglomerative_cluster(m);
  CHECK(d.merges[1].height == 6.0);
  CHECK(d.merges[1].size == 3);
}

TEST_CASE("planted pairs are recovered") {
  SeededRng rng(5);
  const std::vector<int> family{0, 0, 1, 1, 2, 2};
  std::vector<std::vector<double>> e(6, std::vector<double>(6, 0.0));
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      if (i == j) continue;
      e[i][j] = (family[i] == family[j] ? 0.1 : 1.0) + 0.05 * rng.uniform();
    }
  }
  const DistanceMatrix m = symmetrize(matrix({"a", "b", "c", "d", "e", "f"}, e));
  const Clustering c = cut_at_k(agglomerative_cluster(m), 3);
  CHECK(c.assignment == std::vector<int>{0, 0, 1, 1, 2, 2});
}

TEST_CASE("clustering input checks") {
  CHECK_ERROR_CODE(agglomerative_cluster(matrix({"a", "b"}, {{0, 1}, {2, 0}})), ErrorCode::kInvalidConfig);
  CHECK_ERROR_CODE(agglomerative_cluster(matrix({"a", "a"}, {{0, 1}, {1, 0}})), ErrorCode::kInvalidConfig);
}

TEST_CASE("Fowlkes-Mallows hand cases") {
  const Clustering a = make({0, 0, 1});
  const Clustering b = make({0, 1, 1});
  CHECK(pair_counts(a, b).together_both == 0);
  CHECK(fowlkes_mallows(a, b) == 0.0);
  CHECK(fowlkes_mallows(a, a) == 1.0);
  const Clustering other = make_clustering({"x", "y", "z"}, std::vector<int>{0, 0, 1});
  CHECK_ERROR_CODE(fowlkes_mallows(a, other), ErrorCode::kItemMismatch);
}

TEST_CASE("Fowlkes-Mallows aligns items by name") {
  const Clustering a = make_clustering({"p", "q", "r"}, std::vector<int>{0, 0, 1});
  const Clustering b = make_clustering({"r", "q", "p"}, std::vector<int>{1, 0, 0});
  CHECK(fowlkes_mallows(a, b) == 1.0);
}

TEST_CASE("Fowlkes-Mallows matches pair enumeration") {
  SeededRng rng(11);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.uniform_index(7);
    const auto x = random_labels(rng, n, 1 + rng.uniform_index(4));
    const auto y = random_labels(rng, n, 1 + rng.uniform_index(4));
    const double lib = fowlkes_mallows(make(x), make(y));
    CHECK(std::abs(lib - static_cast<double>(oracle::fowlkes_mallows(x, y))) <= 1e-12);
    CHECK(lib == fowlkes_mallows(make(y), make(x)));
  }
}

TEST_CASE("exact permutation p for sizes (3,2,1)") {
  const Clustering ref = make({0, 0, 0, 1, 1, 2});
  CHECK(assignment_count(ref) == 60);
  const PermutationResult r = permutation_test_fm(ref, ref);
  CHECK(r.total == 60);
  CHECK(r.at_least == 1);
  CHECK(r.p_value == 1.0 / 60.0);
  CHECK(r.observed_fm == 1.0);
  const oracle::Fraction f = oracle::permutation_p({0, 0, 0, 1, 1, 2}, {0, 0, 0, 1, 1, 2});
  CHECK(f.num == 1);
  CHECK(f.den == 60);
}

TEST_CASE("exact permutation p matches the enumeration oracle") {
  SeededRng rng(23);
  for (int t = 0; t < 60; ++t) {
    const std::size_t n = 3 + rng.uniform_index(5);
    const auto ref = random_labels(rng, n, 1 + rng.uniform_index(3));
    const auto obs = random_labels(rng, n, 1 + rng.uniform_index(3));
    const PermutationResult r = permutation_test_fm(make(ref), make(obs));
    const oracle::Fraction f = oracle::permutation_p(ref, obs);
    CHECK(r.at_least * f.den == f.num * r.total);
  }
}

TEST_CASE("Monte Carlo agrees with exact") {
  const Clustering ref = make({0, 0, 1, 1, 2, 2, 0, 1});
  const Clustering obs = make({0, 0, 1, 2, 2, 2, 0, 1});
  const double exact = permutation_test_fm(ref, obs).p_value;
  PermutationOptions o;
  o.mode = PermutationMode::kMonteCarlo;
  o.seed = 4;
  const PermutationResult mc = permutation_test_fm(ref, obs, o);
  const double se = std::sqrt(exact * (1 - exact) / 20000.0);
  CHECK(std::abs(mc.p_value - exact) <= 3 * se + 1.0 / 20001.0);
  CHECK(mc.total == 20000);
  CHECK(permutation_test_fm(ref, obs, o).p_value == mc.p_value);
}

TEST_CASE("independent clusterings rarely look significant") {
  SeededRng rng(8);
  std::vector<double> ps;
  for (int t = 0; t < 41; ++t) {
    const auto ref = random_labels(rng, 8, 3);
    const auto obs = random_labels(rng, 8, 3);
    ps.push_back(permutation_test_fm(make(ref), make(obs)).p_value);
  }
  // Discrete p-values are conservative: P(p <= a) <= a up to sampling noise.
  std::sort(ps.begin(), ps.end());
  CHECK(ps[20] >= 0.3);
  CHECK(std::count_if(ps.begin(), ps.end(), [](double p) { return p <= 0.1; }) <= 9);
}

TEST_CASE("too many assignments for exact mode") {
  std::vector<int> labels(24);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
  CHECK_ERROR_CODE(permutation_test_fm(make(labels), make(labels)), ErrorCode::kTooManyAssignments);
}

TEST_CASE("Mann-Whitney hand cases") {
  const std::vector<double> a{3, 4};
  const std::vector<double> b{1, 2};
  const MannWhitneyResult r = mann_whitney_u(a, b, Alternative::kGreater);
  CHECK(r.u_a == 4.0);
  CHECK(r.exact);
  CHECK(r.p_value == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  const std::vector<double> s{1, 2, 2, 5};
  const MannWhitneyResult same = mann_whitney_u(s, s, Alternative::kTwoSided);
  CHECK(same.u_a == 8.0);
  CHECK(same.p_value == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_ERROR_CODE(mann_whitney_u(a, std::vector<double>{}, Alternative::kGreater),
                   ErrorCode::kEmptyGroup);
}

TEST_CASE("Mann-Whitney exact p matches enumeration") {
  SeededRng rng(29);
  for (int t = 0; t < 200; ++t) {
    const std::size_t na = 1 + rng.uniform_index(4);
    const std::size_t nb = 1 + rng.uniform_index(4);
    std::vector<double> a(na);
    std::vector<double> b(nb);
    for (auto& x : a) x = static_cast<double>(rng.uniform_index(5));
    for (auto& x : b) x = static_cast<double>(rng.uniform_index(5));
    for (bool greater : {true, false}) {
      const auto r = mann_whitney_u(a, b, greater ? Alternative::kGreater : Alternative::kTwoSided);
      const oracle::Fraction f = oracle::mann_whitney_p(a, b, greater);
      CHECK(r.exact);
      CHECK(std::abs(r.p_value - f.value()) <= 1e-12);
      CHECK(r.u_a + r.u_b == static_cast<double>(na * nb));
    }
  }
}

TEST_CASE("Mann-Whitney normal approximation") {
  const std::vector<double> a{1.5, 2.2, 3.1, 4.8, 5.0, 6.3, 7.7, 8.1, 9.9, 10.4, 11.0, 12.5, 13.3};
  const std::vector<double> b{0.5, 1.1, 2.0, 2.5, 3.3, 4.1, 4.4, 5.5, 6.0, 6.6, 7.0};
  // Reference values from an independent statistics package (asymptotic,
  // continuity-corrected).
  const auto g = mann_whitney_u(a, b, Alternative::kGreater);
  CHECK(!g.exact);
  CHECK(g.p_value == doctest::Approx(0.016030382431294406).epsilon(1e-9));
  CHECK(mann_whitney_u(a, b, Alternative::kTwoSided).p_value ==
        doctest::Approx(0.03206076486258881).epsilon(1e-9));
  const std::vector<double> ta{1, 2, 2, 3, 3, 3, 4, 5, 6, 7, 8, 9, 10};
  const std::vector<double> tb{2, 3, 3, 4, 4, 5, 5, 5, 6, 1, 0};
  CHECK(mann_whitney_u(ta, tb, Alternative::kTwoSided).p_value ==
        doctest::Approx(0.3649736165186498).epsilon(1e-9));
}

}
