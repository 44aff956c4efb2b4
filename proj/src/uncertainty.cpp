#include "emadapt/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "emadapt/error.hpp"
#include "emadapt/rng.hpp"

namespace emadapt {

void UncertaintyConfig::validate() const {
  if (k_passes < 1) throw Error(ErrorCode::kInvalidConfig, "k_passes must be >= 1");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::kInvalidConfig, "epsilon must be > 0");
}

std::uint64_t pass_seed(std::uint64_t seed, int k) {
  return derive_seed(seed, static_cast<std::uint64_t>(k));
}

ProbMap mc_mean_prediction(const ModelParams& model, const GrayImage& image,
                           const UncertaintyConfig& config, std::uint64_t seed) {
  config.validate();
  ProbMap mean = predict_stochastic(model, image, pass_seed(seed, 0));
  std::vector<double> acc(mean.values().begin(), mean.values().end());
  for (int k = 1; k < config.k_passes; ++k) {
    const ProbMap pass = predict_stochastic(model, image, pass_seed(seed, k));
    const auto v = pass.values();
    const double inv = 1.0 / static_cast<double>(k + 1);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (v[i] - acc[i]) * inv;
  }
  return ProbMap(mean.width(), mean.height(), mean.channels(), std::move(acc));
}

std::vector<double> pixel_entropy(const ProbMap& mean, double epsilon, bool clamp_negative) {
  const std::size_t n = mean.pixel_count();
  std::vector<double> h(n, 0.0);
  for (int c = 0; c < mean.channels(); ++c) {
    const auto ch = mean.channel(c);
    for (std::size_t p = 0; p < n; ++p) h[p] -= ch[p] * std::log(ch[p] + epsilon);
  }
  if (clamp_negative) {
    for (double& v : h) v = std::max(v, 0.0);
  }
  return h;
}

UncertaintyScore image_uncertainty(const ModelParams& model, const GrayImage& image,
                                   const UncertaintyConfig& config, std::uint64_t seed,
                                   bool keep_entropy_map) {
  const ProbMap mean = mc_mean_prediction(model, image, config, seed);
  std::vector<double> h = pixel_entropy(mean, config.epsilon, config.clamp_negative);
  double sum = 0.0;
  for (double v : h) sum += v;
  UncertaintyScore s;
  s.u = sum / static_cast<double>(h.size());
  if (keep_entropy_map) s.entropy_map = std::move(h);
  return s;
}

std::vector<UncertaintyScore> rank_pool_by_uncertainty(const ModelParams& model,
                                                       const DomainPool& pool,
                                                       const UncertaintyConfig& config,
                                                       std::uint64_t seed) {
  if (pool.unlabeled_ids().empty()) {
    throw Error(ErrorCode::kPoolExhausted, "unlabeled pool is empty");
  }
  std::vector<UncertaintyScore> scores;
  for (std::size_t i : pool.unlabeled_ids()) {
    UncertaintyScore s = image_uncertainty(model, pool.sample(i).image, config, seed);
    s.index = i;
    s.image_id = pool.sample(i).id;
    scores.push_back(std::move(s));
  }
  std::sort(scores.begin(), scores.end(), [](const UncertaintyScore& a, const UncertaintyScore& b) {
    if (a.u != b.u) return a.u > b.u;
    return a.index < b.index;
  });
  return scores;
}

}  // namespace emadapt
