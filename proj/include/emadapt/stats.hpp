#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emadapt/mmd.hpp"

namespace emadapt {

// (M + M^T) / 2; NonSquare if rows and columns disagree.
DistanceMatrix symmetrize(const DistanceMatrix& matrix);

// Node ids: leaves are 0..n-1, the merge at position i creates node n + i.
struct Merge {
  std::size_t a = 0;
  std::size_t b = 0;
  double height = 0.0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::vector<std::string> leaves;
  std::vector<Merge> merges;
  std::string linkage = "average";
};

struct Clustering {
  std::vector<std::string> items;
  std::vector<int> assignment;  // cluster id per item, ids in [0, k)
  int k = 0;
};

// Relabels cluster ids by first appearance and recomputes k.
Clustering make_clustering(std::vector<std::string> items, std::span<const int> assignment);

// UPGMA. Equal distances resolve to the lexicographically smallest pair of
// cluster names, where a cluster is named by its smallest leaf name.
Dendrogram agglomerative_cluster(const DistanceMatrix& symmetric);

Clustering cut_at_k(const Dendrogram& dendrogram, int k);

std::string dendrogram_to_text(const Dendrogram& dendrogram);

struct PairCounts {
  std::uint64_t together_both = 0;   // TP
  std::uint64_t together_first = 0;  // TP + FP
  std::uint64_t together_second = 0; // TP + FN
};

// Aligns c2 to c1 by item name; ItemMismatch when the item sets differ.
PairCounts pair_counts(const Clustering& c1, const Clustering& c2);
double fowlkes_mallows(const Clustering& c1, const Clustering& c2);

enum class PermutationMode { kExact, kMonteCarlo };

struct PermutationOptions {
  PermutationMode mode = PermutationMode::kExact;
  std::uint64_t n_permutations = 20000;
  std::uint64_t seed = 0;
  std::uint64_t max_exact = 1000000;
};

struct PermutationResult {
  double p_value = 1.0;
  double observed_fm = 0.0;
  std::uint64_t at_least = 0;  // assignments with FM >= observed
  std::uint64_t total = 0;     // assignments evaluated
  PermutationMode mode = PermutationMode::kExact;
};

// Number of distinct assignments with the cluster sizes of `c`; saturates at
// UINT64_MAX.
std::uint64_t assignment_count(const Clustering& c);

// Permutes the observed labels over the items with cluster sizes held fixed.
// Exact mode raises TooManyAssignments above options.max_exact.
PermutationResult permutation_test_fm(const Clustering& reference, const Clustering& observed,
                                      const PermutationOptions& options = {});

enum class Alternative { kTwoSided, kGreater };

struct MannWhitneyResult {
  double u_a = 0.0;
  double u_b = 0.0;
  double p_value = 1.0;
  bool exact = false;
};

// U_a counts pairs with a > b plus half the ties. Exact null distribution
// (tie-aware) when n_a + n_b <= exact_limit, otherwise the normal
// approximation with tie and continuity correction.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 Alternative alternative, int exact_limit = 12);

std::string to_string(Alternative alternative);
std::string to_string(PermutationMode mode);

}  // namespace emadapt
