#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emadapt/datamodel.hpp"
#include "emadapt/segmodel.hpp"
#include "emadapt/uncertainty.hpp"

namespace emadapt {

enum class SamplerKind {
  kRandom,
  kMinUncertainty,
  kMaxUncertainty,
  kMedianUncertainty,
  kBadge,
  kClue,
};

// CLI spelling: random, min-unc, max-unc, median-unc, badge, clue.
std::string to_string(SamplerKind kind);
// Accepts the CLI spelling and the long forms (min-uncertainty, ...).
SamplerKind parse_sampler(const std::string& name);
// "Random", "Uncertainty" or "Uncertainty + Diversity".
std::string strategy_class(SamplerKind kind);
std::vector<SamplerKind> all_samplers();

struct SamplerOptions {
  int kmeans_iterations = 50;  // CLUE Lloyd cap
};

struct Selection {
  std::vector<std::size_t> indices;   // pool indices, in pick order
  std::vector<std::string> warnings;  // e.g. "DegenerateEmbeddings"
};

// Picks k distinct unlabeled pool indices. InvalidBatch for k < 1,
// PoolExhausted when k exceeds the unlabeled count.
Selection sample(SamplerKind kind, const ModelParams& model, const DomainPool& pool, int k,
                 const UncertaintyConfig& uncertainty, std::uint64_t seed,
                 const SamplerOptions& options = {});

// Rank window over scores sorted ascending by U (ties by index): start
// floor((n - k) / 2).
std::vector<std::size_t> sample_median_uncertainty(std::span<const UncertaintyScore> ascending,
                                                   int k);

// min / max / median selection on unsorted scores.
std::vector<std::size_t> select_by_uncertainty_rank(std::vector<UncertaintyScore> scores,
                                                    SamplerKind kind, int k);

// Spatial mean over pixels of (P - onehot(argmax P)) outer the last decoder
// features; length num_classes * base_channels.
std::vector<double> badge_gradient_embedding(const ModelParams& model, const GrayImage& image);

// k-means++ seeding on gradient embeddings. The first pick is the largest
// norm; later picks are D^2-weighted draws. When all remaining D^2 are zero
// the rest are taken in index order and DegenerateEmbeddings is reported.
Selection select_badge(std::span<const std::vector<double>> embeddings,
                       std::span<const std::size_t> ids, int k, std::uint64_t seed);

// Uncertainty-weighted k-means over features; returns the sample nearest to
// each centroid (distinct, ties by id).
Selection select_clue(std::span<const std::vector<double>> features,
                      std::span<const double> weights, std::span<const std::size_t> ids, int k,
                      std::uint64_t seed, int max_iterations = 50);

}  // namespace emadapt
