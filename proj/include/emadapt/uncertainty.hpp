#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emadapt/datamodel.hpp"
#include "emadapt/segmodel.hpp"

namespace emadapt {

struct UncertaintyConfig {
  int k_passes = 10;
  double epsilon = 1e-12;
  bool clamp_negative = true;  // log(p + eps) makes H slightly negative at one-hot pixels

  void validate() const;
};

struct UncertaintyScore {
  std::size_t index = 0;  // position in the pool
  std::string image_id;
  double u = 0.0;  // mean pixel entropy, nats
  std::vector<double> entropy_map;  // filled only on request
};

// Seed of stochastic pass k (0-based) for a scoring run with `seed`.
std::uint64_t pass_seed(std::uint64_t seed, int k);

// Mean of k_passes dropout-on predictions. A running mean is used, so K
// identical passes reproduce that pass bit-for-bit.
ProbMap mc_mean_prediction(const ModelParams& model, const GrayImage& image,
                           const UncertaintyConfig& config, std::uint64_t seed);

// H = -sum_c p_c log(p_c + eps) per pixel, natural log.
std::vector<double> pixel_entropy(const ProbMap& mean, double epsilon, bool clamp_negative = true);

UncertaintyScore image_uncertainty(const ModelParams& model, const GrayImage& image,
                                   const UncertaintyConfig& config, std::uint64_t seed,
                                   bool keep_entropy_map = false);

// Scores every unlabeled sample with the same pass seeds, so identical images
// score identically. Sorted by U descending, ties by pool index ascending.
std::vector<UncertaintyScore> rank_pool_by_uncertainty(const ModelParams& model,
                                                       const DomainPool& pool,
                                                       const UncertaintyConfig& config,
                                                       std::uint64_t seed);

}  // namespace emadapt
