#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emadapt/datamodel.hpp"
#include "emadapt/segmodel.hpp"

namespace emadapt {

enum class MmdEstimator { kBiased, kUnbiased };

std::string to_string(MmdEstimator estimator);
MmdEstimator parse_estimator(const std::string& name);

/// RBF kernel. An empty bandwidth means the median heuristic over the pooled
/// samples of each comparison.
struct KernelConfig {
  std::optional<double> bandwidth;

  void validate() const;
  std::string describe() const;  // "rbf(sigma=...)" or "rbf(median-heuristic)"
};

// exp(-|x - y|^2 / (2 sigma^2)).
double rbf_kernel(const EmbeddingVec& x, const EmbeddingVec& y, double sigma);

// Median of pairwise Euclidean distances over distinct index pairs (the mean
// of the two middle values when the pair count is even).
double median_heuristic(std::span<const EmbeddingVec> points);

struct MmdResult {
  double value = 0.0;
  double sigma = 0.0;
  MmdEstimator estimator = MmdEstimator::kBiased;
};

// Squared MMD. The biased V-statistic is clamped at 0 and is exactly 0 for
// identical sample lists; the unbiased U-statistic can be slightly negative.
MmdResult mmd2(std::span<const EmbeddingVec> x, std::span<const EmbeddingVec> y,
               const KernelConfig& kernel, MmdEstimator estimator = MmdEstimator::kBiased);

// Sum with a fixed pairwise-tree order, so results do not depend on how work
// is split.
double pairwise_sum(std::span<const double> values);

/// Squared-MMD distances between domains. Row i is embedded by the model
/// pretrained on domain i; entry (i, j) compares domain i to domain j.
struct DistanceMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<double>> entries;
  std::vector<std::vector<double>> sigmas;  // bandwidth used per entry
  std::vector<std::string> embedder_ids;    // model hash per row
  MmdEstimator estimator = MmdEstimator::kBiased;
  std::string kernel = "rbf(median-heuristic)";
  std::size_t sample_cap = 0;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return names.size(); }
  std::size_t index_of(const std::string& name) const;  // UnknownDomain if absent
  double at(const std::string& row, const std::string& col) const;
};

// Seed-deterministic subsample of up to `cap` indices of [0, n), ascending.
std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t cap, std::uint64_t seed);

std::vector<EmbeddingVec> embed_all(const ModelParams& model,
                                    std::span<const std::size_t> indices,
                                    const DomainPool& pool);

// The subsample of domain j is the same in every row, so (i, i) is exactly 0
// with the biased estimator.
DistanceMatrix domain_distance_matrix(std::span<const DomainPool> domains,
                                      std::span<const ModelParams> models,
                                      const KernelConfig& kernel, std::size_t sample_cap,
                                      std::uint64_t seed,
                                      MmdEstimator estimator = MmdEstimator::kBiased);

// Argmin of matrix(candidate, target) over candidates; ties go to the first
// candidate in the given order.
std::string select_optimal_source(const DistanceMatrix& matrix, const std::string& target,
                                  std::span<const std::string> candidates);

// Argmax counterpart used by the worst-domain control.
std::string select_worst_source(const DistanceMatrix& matrix, const std::string& target,
                                std::span<const std::string> candidates);

// CSV with domain names as row/column headers.
std::string matrix_to_csv(const DistanceMatrix& matrix);
DistanceMatrix matrix_from_csv(const std::string& text);

}  // namespace emadapt
