#include "emadapt/mmd.hpp"

#include <algorithm>
#include <cmath>

#include "emadapt/error.hpp"
#include "emadapt/rng.hpp"
#include "emadapt/text.hpp"

namespace emadapt {

std::string to_string(MmdEstimator estimator) {
  return estimator == MmdEstimator::kBiased ? "biased-v-statistic" : "unbiased-u-statistic";
}

MmdEstimator parse_estimator(const std::string& name) {
  if (name == "biased" || name == "biased-v-statistic") return MmdEstimator::kBiased;
  if (name == "unbiased" || name == "unbiased-u-statistic") return MmdEstimator::kUnbiased;
  throw Error(ErrorCode::kInvalidConfig, "unknown MMD estimator '" + name + "'");
}

void KernelConfig::validate() const {
  if (bandwidth && !(*bandwidth > 0.0)) {
    throw Error(ErrorCode::kInvalidConfig, "kernel bandwidth must be positive");
  }
}

std::string KernelConfig::describe() const {
  return bandwidth ? "rbf(sigma=" + format_real(*bandwidth) + ")" : "rbf(median-heuristic)";
}

namespace {

double squared_distance(const EmbeddingVec& x, const EmbeddingVec& y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::kLengthMismatch, "embedding lengths differ: " +
                                                std::to_string(x.size()) + " vs " +
                                                std::to_string(y.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

double kernel_from_sq(double sq, double sigma) { return std::exp(-sq / (2.0 * sigma * sigma)); }

// Row-major kernel values over x * y, optionally skipping the diagonal.
double kernel_sum(std::span<const EmbeddingVec> x, std::span<const EmbeddingVec> y, double sigma,
                  bool skip_diagonal) {
  std::vector<double> values;
  values.reserve(x.size() * y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (skip_diagonal && i == j) continue;
      values.push_back(kernel_from_sq(squared_distance(x[i], y[j]), sigma));
    }
  }
  return pairwise_sum(values);
}

}  // namespace

double rbf_kernel(const EmbeddingVec& x, const EmbeddingVec& y, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::kInvalidConfig, "sigma must be positive");
  return kernel_from_sq(squared_distance(x, y), sigma);
}

double median_heuristic(std::span<const EmbeddingVec> points) {
  if (points.size() < 2) {
    throw Error(ErrorCode::kDegenerateDistances, "median heuristic needs at least 2 points");
  }
  std::vector<double> d;
  d.reserve(points.size() * (points.size() - 1) / 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      d.push_back(std::sqrt(squared_distance(points[i], points[j])));
    }
  }
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  const double median = n % 2 == 1 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  if (!(median > 0.0)) {
    throw Error(ErrorCode::kDegenerateDistances,
                "median pairwise distance is zero (points are (nearly) identical)");
  }
  return median;
}

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

MmdResult mmd2(std::span<const EmbeddingVec> x, std::span<const EmbeddingVec> y,
               const KernelConfig& kernel, MmdEstimator estimator) {
  kernel.validate();
  const std::size_t min_size = estimator == MmdEstimator::kBiased ? 1 : 2;
  if (x.size() < min_size || y.size() < min_size) {
    throw Error(ErrorCode::kEmptySet, "mmd2 needs at least " + std::to_string(min_size) +
                                          " samples per set");
  }
  MmdResult r;
  r.estimator = estimator;
  if (kernel.bandwidth) {
    r.sigma = *kernel.bandwidth;
  } else {
    std::vector<EmbeddingVec> pooled(x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());
    r.sigma = median_heuristic(pooled);
  }
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  if (estimator == MmdEstimator::kBiased) {
    const double xx = kernel_sum(x, x, r.sigma, false) / (n * n);
    const double yy = kernel_sum(y, y, r.sigma, false) / (m * m);
    const double xy = kernel_sum(x, y, r.sigma, false) / (n * m);
    r.value = std::max(0.0, xx + yy - 2.0 * xy);
  } else {
    const double xx = kernel_sum(x, x, r.sigma, true) / (n * (n - 1.0));
    const double yy = kernel_sum(y, y, r.sigma, true) / (m * (m - 1.0));
    const double xy = kernel_sum(x, y, r.sigma, false) / (n * m);
    r.value = xx + yy - 2.0 * xy;
  }
  return r;
}

std::size_t DistanceMatrix::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorCode::kUnknownDomain, "domain '" + name + "' not in matrix");
  return static_cast<std::size_t>(it - names.begin());
}

double DistanceMatrix::at(const std::string& row, const std::string& col) const {
  return entries[index_of(row)][index_of(col)];
}

std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n <= cap) return idx;
  SeededRng rng(seed);
  rng.shuffle(idx);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<EmbeddingVec> embed_all(const ModelParams& model, std::span<const std::size_t> indices,
                                    const DomainPool& pool) {
  std::vector<EmbeddingVec> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(embed(model, pool.sample(i).image));
  return out;
}

DistanceMatrix domain_distance_matrix(std::span<const DomainPool> domains,
                                      std::span<const ModelParams> models,
                                      const KernelConfig& kernel, std::size_t sample_cap,
                                      std::uint64_t seed, MmdEstimator estimator) {
  if (sample_cap < 2) throw Error(ErrorCode::kInvalidConfig, "sample_cap must be >= 2");
  if (models.size() != domains.size()) {
    throw Error(ErrorCode::kMissingModel, "need one pretrained model per domain (" +
                                              std::to_string(domains.size()) + " domains, " +
                                              std::to_string(models.size()) + " models)");
  }
  const std::size_t n = domains.size();
  DistanceMatrix m;
  m.estimator = estimator;
  m.kernel = kernel.describe();
  m.sample_cap = sample_cap;
  m.seed = seed;
  m.entries.assign(n, std::vector<double>(n, 0.0));
  m.sigmas.assign(n, std::vector<double>(n, 0.0));
  std::vector<std::vector<std::size_t>> picks;
  for (std::size_t j = 0; j < n; ++j) {
    m.names.push_back(domains[j].name());
    picks.push_back(subsample_indices(domains[j].size(), sample_cap, derive_seed(seed, j)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    m.embedder_ids.push_back(models[i].hash());
    std::vector<std::vector<EmbeddingVec>> embedded;
    for (std::size_t j = 0; j < n; ++j) embedded.push_back(embed_all(models[i], picks[j], domains[j]));
    for (std::size_t j = 0; j < n; ++j) {
      const MmdResult r = mmd2(embedded[i], embedded[j], kernel, estimator);
      m.entries[i][j] = r.value;
      m.sigmas[i][j] = r.sigma;
    }
  }
  return m;
}

namespace {

std::string select_source(const DistanceMatrix& matrix, const std::string& target,
                          std::span<const std::string> candidates, bool want_max) {
  if (candidates.empty()) throw Error(ErrorCode::kEmptyCandidates, "no candidate sources");
  const std::size_t col = matrix.index_of(target);
  std::size_t best = 0;
  double best_value = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (candidates[k] == target) {
      throw Error(ErrorCode::kInvalidConfig, "target '" + target + "' listed as a candidate");
    }
    const double v = matrix.entries[matrix.index_of(candidates[k])][col];
    if (k == 0 || (want_max ? v > best_value : v < best_value)) {
      best = k;
      best_value = v;
    }
  }
  return candidates[best];
}

}  // namespace

std::string select_optimal_source(const DistanceMatrix& matrix, const std::string& target,
                                  std::span<const std::string> candidates) {
  return select_source(matrix, target, candidates, false);
}

std::string select_worst_source(const DistanceMatrix& matrix, const std::string& target,
                                std::span<const std::string> candidates) {
  return select_source(matrix, target, candidates, true);
}

std::string matrix_to_csv(const DistanceMatrix& matrix) {
  std::string out = "source\\target";
  for (const auto& n : matrix.names) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    out += matrix.names[i];
    for (double v : matrix.entries[i]) out += "," + format_real(v);
    out += "\n";
  }
  return out;
}

DistanceMatrix matrix_from_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw Error(ErrorCode::kParse, "empty matrix CSV");
  DistanceMatrix m;
  m.names.assign(rows[0].begin() + 1, rows[0].end());
  const std::size_t n = m.names.size();
  if (rows.size() != n + 1) throw Error(ErrorCode::kNonSquare, "matrix CSV is not square");
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[i + 1];
    if (r.size() != n + 1) throw Error(ErrorCode::kNonSquare, "matrix CSV row has wrong length");
    if (r[0] != m.names[i]) {
      throw Error(ErrorCode::kParse, "row header '" + r[0] + "' does not match column order");
    }
    std::vector<double> row;
    for (std::size_t j = 0; j < n; ++j) row.push_back(parse_real(r[j + 1]));
    m.entries.push_back(std::move(row));
  }
  m.sigmas.assign(n, std::vector<double>(n, 0.0));
  return m;
}

}  // namespace emadapt
