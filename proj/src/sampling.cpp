#include "emadapt/sampling.hpp"

#include <algorithm>
#include <limits>

#include "emadapt/error.hpp"
#include "emadapt/rng.hpp"

namespace emadapt {

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kRandom: return "random";
    case SamplerKind::kMinUncertainty: return "min-unc";
    case SamplerKind::kMaxUncertainty: return "max-unc";
    case SamplerKind::kMedianUncertainty: return "median-unc";
    case SamplerKind::kBadge: return "badge";
    case SamplerKind::kClue: return "clue";
  }
  return "unknown";
}

SamplerKind parse_sampler(const std::string& name) {
  if (name == "random") return SamplerKind::kRandom;
  if (name == "min-unc" || name == "min-uncertainty") return SamplerKind::kMinUncertainty;
  if (name == "max-unc" || name == "max-uncertainty") return SamplerKind::kMaxUncertainty;
  if (name == "median-unc" || name == "median-uncertainty") return SamplerKind::kMedianUncertainty;
  if (name == "badge") return SamplerKind::kBadge;
  if (name == "clue") return SamplerKind::kClue;
  throw Error(ErrorCode::kInvalidConfig, "unknown sampler '" + name + "'");
}

std::string strategy_class(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kRandom: return "Random";
    case SamplerKind::kBadge:
    case SamplerKind::kClue: return "Uncertainty + Diversity";
    default: return "Uncertainty";
  }
}

std::vector<SamplerKind> all_samplers() {
  return {SamplerKind::kRandom,           SamplerKind::kMinUncertainty, SamplerKind::kMaxUncertainty,
          SamplerKind::kMedianUncertainty, SamplerKind::kBadge,          SamplerKind::kClue};
}

namespace {

void check_batch(int k, std::size_t available) {
  if (k < 1) throw Error(ErrorCode::kInvalidBatch, "batch size must be >= 1");
  if (static_cast<std::size_t>(k) > available) {
    throw Error(ErrorCode::kPoolExhausted, "requested " + std::to_string(k) +
                                               " samples but only " + std::to_string(available) +
                                               " are unlabeled");
  }
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kLengthMismatch, "feature lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Draw an index with probability proportional to weights[i]; -1 if all zero.
long weighted_draw(std::span<const double> weights, SeededRng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) return -1;
  const double r = rng.uniform() * total;
  double acc = 0.0;
  long last_positive = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = static_cast<long>(i);
    if (r < acc) return last_positive;
  }
  return last_positive;
}

std::vector<UncertaintyScore> ascending(std::vector<UncertaintyScore> scores) {
  std::sort(scores.begin(), scores.end(), [](const UncertaintyScore& a, const UncertaintyScore& b) {
    if (a.u != b.u) return a.u < b.u;
    return a.index < b.index;
  });
  return scores;
}

}  // namespace

std::vector<std::size_t> sample_median_uncertainty(std::span<const UncertaintyScore> ascending,
                                                   int k) {
  check_batch(k, ascending.size());
  const std::size_t start = (ascending.size() - static_cast<std::size_t>(k)) / 2;
  std::vector<std::size_t> out;
  for (std::size_t r = start; r < start + static_cast<std::size_t>(k); ++r) {
    out.push_back(ascending[r].index);
  }
  return out;
}

std::vector<std::size_t> select_by_uncertainty_rank(std::vector<UncertaintyScore> scores,
                                                    SamplerKind kind, int k) {
  check_batch(k, scores.size());
  const auto asc = ascending(std::move(scores));
  const std::size_t n = asc.size();
  const std::size_t kk = static_cast<std::size_t>(k);
  std::vector<std::size_t> out;
  switch (kind) {
    case SamplerKind::kMinUncertainty:
      for (std::size_t r = 0; r < kk; ++r) out.push_back(asc[r].index);
      return out;
    case SamplerKind::kMaxUncertainty:
      for (std::size_t r = n; r > n - kk; --r) out.push_back(asc[r - 1].index);
      return out;
    case SamplerKind::kMedianUncertainty:
      return sample_median_uncertainty(asc, k);
    default:
      throw Error(ErrorCode::kInvalidConfig, "not a rank-based sampler: " + to_string(kind));
  }
}

std::vector<double> badge_gradient_embedding(const ModelParams& model, const GrayImage& image) {
  const ForwardView view = inspect(model, image);
  const std::size_t n = view.probs.pixel_count();
  const int classes = view.probs.channels();
  Eigen::MatrixXd residual(classes, static_cast<Eigen::Index>(n));
  for (std::size_t p = 0; p < n; ++p) {
    int best = 0;
    for (int c = 1; c < classes; ++c) {
      if (view.probs.value(c, p) > view.probs.value(best, p)) best = c;
    }
    for (int c = 0; c < classes; ++c) {
      residual(c, static_cast<Eigen::Index>(p)) = view.probs.value(c, p) - (c == best ? 1.0 : 0.0);
    }
  }
  const Eigen::MatrixXd g = residual * view.penultimate.transpose() / static_cast<double>(n);
  std::vector<double> out(static_cast<std::size_t>(g.size()));
  for (Eigen::Index c = 0; c < g.rows(); ++c) {
    for (Eigen::Index f = 0; f < g.cols(); ++f) {
      out[static_cast<std::size_t>(c * g.cols() + f)] = g(c, f);
    }
  }
  return out;
}

Selection select_badge(std::span<const std::vector<double>> embeddings,
                       std::span<const std::size_t> ids, int k, std::uint64_t seed) {
  if (embeddings.size() != ids.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one embedding per id required");
  }
  check_batch(k, ids.size());
  const std::size_t n = ids.size();
  // Work in ascending-id order so every tie resolves by id.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });

  Selection sel;
  std::vector<bool> taken(n, false);
  std::size_t first = order[0];
  double best_norm = -1.0;
  for (std::size_t i : order) {
    double norm = 0.0;
    for (double v : embeddings[i]) norm += v * v;
    if (norm > best_norm) {
      best_norm = norm;
      first = i;
    }
  }
  taken[first] = true;
  sel.indices.push_back(ids[first]);

  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  SeededRng rng(seed);
  std::size_t last = first;
  while (sel.indices.size() < static_cast<std::size_t>(k)) {
    std::vector<double> weights(n, 0.0);
    for (std::size_t pos = 0; pos < n; ++pos) {
      const std::size_t i = order[pos];
      d2[i] = std::min(d2[i], sq_dist(embeddings[i], embeddings[last]));
      weights[pos] = taken[i] ? 0.0 : d2[i];
    }
    const long pick = weighted_draw(weights, rng);
    if (pick < 0) {
      sel.warnings.push_back("DegenerateEmbeddings");
      for (std::size_t i : order) {
        if (sel.indices.size() == static_cast<std::size_t>(k)) break;
        if (!taken[i]) {
          taken[i] = true;
          sel.indices.push_back(ids[i]);
        }
      }
      break;
    }
    last = order[static_cast<std::size_t>(pick)];
    taken[last] = true;
    sel.indices.push_back(ids[last]);
  }
  return sel;
}

Selection select_clue(std::span<const std::vector<double>> features,
                      std::span<const double> weights, std::span<const std::size_t> ids, int k,
                      std::uint64_t seed, int max_iterations) {
  if (features.size() != ids.size() || weights.size() != ids.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one feature vector and weight per id required");
  }
  check_batch(k, ids.size());
  const std::size_t n = ids.size();
  const std::size_t kk = static_cast<std::size_t>(k);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });

  Selection sel;
  std::vector<double> w(weights.begin(), weights.end());
  for (double& v : w) v = std::max(v, 0.0);
  if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) {
    std::fill(w.begin(), w.end(), 1.0);
    sel.warnings.push_back("ZeroWeights");
  }

  // Weighted k-means++ seeding.
  SeededRng rng(seed);
  std::vector<std::vector<double>> centroids;
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> is_center(n, false);
  while (centroids.size() < kk) {
    std::vector<double> pw(n, 0.0);
    for (std::size_t pos = 0; pos < n; ++pos) {
      const std::size_t i = order[pos];
      if (!centroids.empty()) d2[i] = std::min(d2[i], sq_dist(features[i], centroids.back()));
      pw[pos] = is_center[i] ? 0.0 : (centroids.empty() ? w[i] : w[i] * d2[i]);
    }
    long pick = weighted_draw(pw, rng);
    std::size_t chosen = 0;
    if (pick >= 0) {
      chosen = order[static_cast<std::size_t>(pick)];
    } else {
      auto it = std::find_if(order.begin(), order.end(), [&](std::size_t i) { return !is_center[i]; });
      chosen = *it;
    }
    is_center[chosen] = true;
    centroids.push_back(features[chosen]);
  }

  // Lloyd iterations on the weighted objective.
  std::vector<std::size_t> assign(n, 0);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = sq_dist(features[i], centroids[0]);
      for (std::size_t c = 1; c < kk; ++c) {
        const double d = sq_dist(features[i], centroids[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
    }
    if (!changed) break;
    const std::size_t dim = features[0].size();
    std::vector<std::vector<double>> sums(kk, std::vector<double>(dim, 0.0));
    std::vector<double> mass(kk, 0.0);
    for (std::size_t pos = 0; pos < n; ++pos) {
      const std::size_t i = order[pos];
      mass[assign[i]] += w[i];
      for (std::size_t d = 0; d < dim; ++d) sums[assign[i]][d] += w[i] * features[i][d];
    }
    for (std::size_t c = 0; c < kk; ++c) {
      if (mass[c] <= 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / mass[c];
    }
  }

  std::vector<bool> taken(n, false);
  for (std::size_t c = 0; c < kk; ++c) {
    std::size_t best = n;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
      if (taken[i]) continue;
      const double d = sq_dist(features[i], centroids[c]);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    taken[best] = true;
    sel.indices.push_back(ids[best]);
  }
  return sel;
}

Selection sample(SamplerKind kind, const ModelParams& model, const DomainPool& pool, int k,
                 const UncertaintyConfig& uncertainty, std::uint64_t seed,
                 const SamplerOptions& options) {
  const auto& unlabeled = pool.unlabeled_ids();
  check_batch(k, unlabeled.size());
  const std::uint64_t draw_seed = derive_seed(seed, 0x5A3D);

  switch (kind) {
    case SamplerKind::kRandom: {
      std::vector<std::size_t> ids = unlabeled;
      SeededRng rng(draw_seed);
      rng.shuffle(ids);
      ids.resize(static_cast<std::size_t>(k));
      return {ids, {}};
    }
    case SamplerKind::kMinUncertainty:
    case SamplerKind::kMaxUncertainty:
    case SamplerKind::kMedianUncertainty:
      return {select_by_uncertainty_rank(rank_pool_by_uncertainty(model, pool, uncertainty, seed),
                                         kind, k),
              {}};
    case SamplerKind::kBadge: {
      std::vector<std::vector<double>> g;
      for (std::size_t i : unlabeled) g.push_back(badge_gradient_embedding(model, pool.sample(i).image));
      return select_badge(g, unlabeled, k, draw_seed);
    }
    case SamplerKind::kClue: {
      std::vector<std::vector<double>> f;
      std::vector<double> w;
      for (std::size_t i : unlabeled) {
        const EmbeddingVec e = embed(model, pool.sample(i).image);
        f.emplace_back(e.values().begin(), e.values().end());
        w.push_back(image_uncertainty(model, pool.sample(i).image, uncertainty, seed).u);
      }
      return select_clue(f, w, unlabeled, k, draw_seed, options.kmeans_iterations);
    }
  }
  throw Error(ErrorCode::kInvalidConfig, "unhandled sampler");
}

}  // namespace emadapt
