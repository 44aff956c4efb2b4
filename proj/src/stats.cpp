#include "emadapt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "emadapt/error.hpp"
#include "emadapt/rng.hpp"
#include "emadapt/text.hpp"

namespace emadapt {

DistanceMatrix symmetrize(const DistanceMatrix& matrix) {
  const std::size_t n = matrix.size();
  if (matrix.entries.size() != n) throw Error(ErrorCode::kNonSquare, "row count differs from names");
  for (const auto& row : matrix.entries) {
    if (row.size() != n) throw Error(ErrorCode::kNonSquare, "distance matrix is not square");
  }
  DistanceMatrix out = matrix;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (matrix.entries[i][j] + matrix.entries[j][i]);
      out.entries[i][j] = v;
      out.entries[j][i] = v;
    }
  }
  return out;
}

Clustering make_clustering(std::vector<std::string> items, std::span<const int> assignment) {
  if (items.size() != assignment.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one cluster id per item required");
  }
  Clustering c;
  c.items = std::move(items);
  std::map<int, int> remap;
  for (int id : assignment) {
    auto it = remap.find(id);
    if (it == remap.end()) it = remap.emplace(id, static_cast<int>(remap.size())).first;
    c.assignment.push_back(it->second);
  }
  c.k = static_cast<int>(remap.size());
  return c;
}

Dendrogram agglomerative_cluster(const DistanceMatrix& symmetric) {
  const std::size_t n = symmetric.size();
  if (n < 2) throw Error(ErrorCode::kEmptySet, "clustering needs at least 2 items");
  for (const auto& row : symmetric.entries) {
    if (row.size() != n || symmetric.entries.size() != n) {
      throw Error(ErrorCode::kNonSquare, "distance matrix is not square");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = symmetric.entries[i][j];
      if (v != symmetric.entries[j][i]) {
        throw Error(ErrorCode::kInvalidConfig, "distance matrix is not symmetric");
      }
      if (!(v >= 0.0)) throw Error(ErrorCode::kInvalidConfig, "negative or NaN distance");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (symmetric.names[i] == symmetric.names[j]) {
        throw Error(ErrorCode::kInvalidConfig, "duplicate item name '" + symmetric.names[i] + "'");
      }
    }
  }

  Dendrogram d;
  d.leaves = symmetric.names;
  struct Cluster {
    std::size_t node;
    std::size_t size;
    std::string name;
    bool alive;
  };
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters.push_back({i, 1, symmetric.names[i], true});
  std::vector<std::vector<double>> dist = symmetric.entries;

  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t bi = 0, bj = 0;
    bool found = false;
    double best = 0.0;
    std::pair<std::string, std::string> best_names;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      if (!clusters[i].alive) continue;
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        if (!clusters[j].alive) continue;
        auto names = std::minmax(clusters[i].name, clusters[j].name);
        std::pair<std::string, std::string> key{names.first, names.second};
        if (!found || dist[i][j] < best || (dist[i][j] == best && key < best_names)) {
          found = true;
          best = dist[i][j];
          best_names = key;
          bi = i;
          bj = j;
        }
      }
    }
    if (clusters[bj].name < clusters[bi].name) std::swap(bi, bj);
    Merge m;
    m.a = clusters[bi].node;
    m.b = clusters[bj].node;
    m.height = best;
    m.size = clusters[bi].size + clusters[bj].size;
    d.merges.push_back(m);

    Cluster merged{n + step, m.size, std::min(clusters[bi].name, clusters[bj].name), true};
    std::vector<double> row(clusters.size() + 1, 0.0);
    const double wa = static_cast<double>(clusters[bi].size);
    const double wb = static_cast<double>(clusters[bj].size);
    for (std::size_t k = 0; k < clusters.size(); ++k) {
      if (!clusters[k].alive || k == bi || k == bj) continue;
      row[k] = (wa * dist[bi][k] + wb * dist[bj][k]) / (wa + wb);
    }
    clusters[bi].alive = false;
    clusters[bj].alive = false;
    clusters.push_back(merged);
    for (std::size_t k = 0; k + 1 < clusters.size(); ++k) dist[k].push_back(row[k]);
    dist.push_back(row);
  }
  return d;
}

Clustering cut_at_k(const Dendrogram& dendrogram, int k) {
  const std::size_t n = dendrogram.leaves.size();
  if (k < 1 || static_cast<std::size_t>(k) > n) {
    throw Error(ErrorCode::kOutOfRange, "k must lie in [1, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> parent(2 * n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  const std::size_t applied = n - static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < applied; ++i) {
    const Merge& m = dendrogram.merges[i];
    parent[find(m.a)] = n + i;
    parent[find(m.b)] = n + i;
  }
  std::vector<int> raw;
  for (std::size_t i = 0; i < n; ++i) raw.push_back(static_cast<int>(find(i)));
  return make_clustering(dendrogram.leaves, raw);
}

std::string dendrogram_to_text(const Dendrogram& dendrogram) {
  const std::size_t n = dendrogram.leaves.size();
  std::string out;
  auto node_name = [&](std::size_t id) {
    return id < n ? dendrogram.leaves[id] : "node" + std::to_string(id);
  };
  // Recursive print from the root.
  auto print = [&](auto&& self, std::size_t id, int indent) -> void {
    out += std::string(static_cast<std::size_t>(indent) * 2, ' ');
    if (id < n) {
      out += dendrogram.leaves[id] + "\n";
      return;
    }
    const Merge& m = dendrogram.merges[id - n];
    out += node_name(id) + " h=" + format_real(m.height) + "\n";
    self(self, m.a, indent + 1);
    self(self, m.b, indent + 1);
  };
  if (dendrogram.merges.empty()) {
    for (const auto& l : dendrogram.leaves) out += l + "\n";
  } else {
    print(print, n + dendrogram.merges.size() - 1, 0);
  }
  return out;
}

namespace {

std::uint64_t choose2(std::uint64_t m) { return m * (m - 1) / 2; }

// c2's assignment reordered to c1's item order.
std::vector<int> aligned(const Clustering& c1, const Clustering& c2) {
  if (c1.items.size() != c2.items.size()) {
    throw Error(ErrorCode::kItemMismatch, "clusterings cover different item counts");
  }
  std::map<std::string, int> lookup;
  for (std::size_t i = 0; i < c2.items.size(); ++i) {
    if (!lookup.emplace(c2.items[i], c2.assignment.at(i)).second) {
      throw Error(ErrorCode::kItemMismatch, "duplicate item '" + c2.items[i] + "'");
    }
  }
  std::vector<int> out;
  for (const auto& item : c1.items) {
    const auto it = lookup.find(item);
    if (it == lookup.end()) throw Error(ErrorCode::kItemMismatch, "item '" + item + "' missing");
    out.push_back(it->second);
  }
  return out;
}

std::uint64_t together_count(std::span<const int> a) {
  std::map<int, std::uint64_t> sizes;
  for (int v : a) ++sizes[v];
  std::uint64_t s = 0;
  for (const auto& [id, m] : sizes) s += choose2(m);
  return s;
}

std::uint64_t joint_together(std::span<const int> a, std::span<const int> b) {
  std::map<std::pair<int, int>, std::uint64_t> cells;
  for (std::size_t i = 0; i < a.size(); ++i) ++cells[{a[i], b[i]}];
  std::uint64_t s = 0;
  for (const auto& [key, m] : cells) s += choose2(m);
  return s;
}

double fm_from_counts(const PairCounts& c) {
  if (c.together_both == 0) return 0.0;
  return static_cast<double>(c.together_both) /
         std::sqrt(static_cast<double>(c.together_first) * static_cast<double>(c.together_second));
}

}  // namespace

PairCounts pair_counts(const Clustering& c1, const Clustering& c2) {
  const std::vector<int> b = aligned(c1, c2);
  PairCounts pc;
  pc.together_both = joint_together(c1.assignment, b);
  pc.together_first = together_count(c1.assignment);
  pc.together_second = together_count(b);
  return pc;
}

double fowlkes_mallows(const Clustering& c1, const Clustering& c2) {
  return fm_from_counts(pair_counts(c1, c2));
}

std::uint64_t assignment_count(const Clustering& c) {
  std::map<int, std::uint64_t> sizes;
  for (int v : c.assignment) ++sizes[v];
  // Product of binomials C(remaining, size), saturating.
  std::uint64_t total = 1;
  std::uint64_t remaining = c.assignment.size();
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  for (const auto& [id, s] : sizes) {
    std::uint64_t binom = 1;
    for (std::uint64_t i = 1; i <= s; ++i) {
      const std::uint64_t num = remaining - s + i;
      if (binom > kMax / num) return kMax;
      binom = binom * num / i;
    }
    if (binom != 0 && total > kMax / binom) return kMax;
    total *= binom;
    remaining -= s;
  }
  return total;
}

PermutationResult permutation_test_fm(const Clustering& reference, const Clustering& observed,
                                      const PermutationOptions& options) {
  std::vector<int> labels = aligned(reference, observed);
  const std::span<const int> ref = reference.assignment;
  PermutationResult r;
  r.mode = options.mode;
  const PairCounts obs{joint_together(ref, labels), together_count(ref), together_count(labels)};
  r.observed_fm = fm_from_counts(obs);
  // Cluster sizes are fixed under permutation, so FM is monotone in TP alone.
  const bool degenerate = obs.together_first == 0 || obs.together_second == 0;
  auto at_least = [&](std::span<const int> perm) {
    return degenerate || joint_together(ref, perm) >= obs.together_both;
  };

  if (options.mode == PermutationMode::kExact) {
    const std::uint64_t count = assignment_count(observed);
    if (count > options.max_exact) {
      throw Error(ErrorCode::kTooManyAssignments,
                  "exact enumeration needs " + std::to_string(count) + " assignments (limit " +
                      std::to_string(options.max_exact) + ")");
    }
    std::sort(labels.begin(), labels.end());
    do {
      ++r.total;
      if (at_least(labels)) ++r.at_least;
    } while (std::next_permutation(labels.begin(), labels.end()));
    r.p_value = static_cast<double>(r.at_least) / static_cast<double>(r.total);
  } else {
    if (options.n_permutations < 1) {
      throw Error(ErrorCode::kInvalidConfig, "n_permutations must be >= 1");
    }
    SeededRng rng(options.seed);
    for (std::uint64_t i = 0; i < options.n_permutations; ++i) {
      rng.shuffle(labels);
      ++r.total;
      if (at_least(labels)) ++r.at_least;
    }
    r.p_value = static_cast<double>(1 + r.at_least) / static_cast<double>(1 + r.total);
  }
  return r;
}

namespace {

double normal_upper(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 Alternative alternative, int exact_limit) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kEmptyGroup, "both groups must be non-empty");
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const std::size_t n = na + nb;

  // Twice U_a as an integer.
  std::int64_t u2 = 0;
  for (double x : a) {
    for (double y : b) u2 += x > y ? 2 : (x == y ? 1 : 0);
  }
  const std::int64_t nab = static_cast<std::int64_t>(na * nb);
  MannWhitneyResult r;
  r.u_a = static_cast<double>(u2) / 2.0;
  r.u_b = static_cast<double>(nab) - r.u_a;

  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  std::vector<std::size_t> ties;  // tie block sizes in ascending value order
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[j] == pooled[i]) ++j;
    ties.push_back(j - i);
    i = j;
  }

  if (static_cast<int>(n) <= exact_limit) {
    r.exact = true;
    // DP over tie blocks: choosing m of a block of size t at midrank r adds
    // m * 2r to twice the rank sum of group a.
    const std::int64_t max2r = static_cast<std::int64_t>(2 * n * n + 2);
    std::vector<std::vector<double>> ways(na + 1, std::vector<double>(max2r + 1, 0.0));
    ways[0][0] = 1.0;
    std::size_t start = 0;
    for (std::size_t t : ties) {
      const std::int64_t two_mid = static_cast<std::int64_t>(2 * start + t + 1);
      std::vector<std::vector<double>> next(na + 1, std::vector<double>(max2r + 1, 0.0));
      for (std::size_t c = 0; c <= na; ++c) {
        for (std::int64_t s = 0; s <= max2r; ++s) {
          if (ways[c][s] == 0.0) continue;
          double binom = 1.0;
          for (std::size_t m = 0; m <= t && c + m <= na; ++m) {
            if (m > 0) binom = binom * static_cast<double>(t - m + 1) / static_cast<double>(m);
            const std::int64_t s2 = s + static_cast<std::int64_t>(m) * two_mid;
            next[c + m][s2] += ways[c][s] * binom;
          }
        }
      }
      ways = std::move(next);
      start += t;
    }
    // 2U = 2R - na(na+1).
    const std::int64_t offset = static_cast<std::int64_t>(na * (na + 1));
    const std::int64_t dev_obs = std::llabs(2 * u2 - 2 * nab);
    double hit = 0.0;
    double total = 0.0;
    for (std::int64_t s = 0; s <= max2r; ++s) {
      const double w = ways[na][s];
      if (w == 0.0) continue;
      const std::int64_t u2s = s - offset;
      total += w;
      const bool extreme = alternative == Alternative::kGreater
                               ? u2s >= u2
                               : std::llabs(2 * u2s - 2 * nab) >= dev_obs;
      if (extreme) hit += w;
    }
    r.p_value = hit / total;
    return r;
  }

  const double mu = static_cast<double>(nab) / 2.0;
  double tie_term = 0.0;
  for (std::size_t t : ties) {
    const double tt = static_cast<double>(t);
    tie_term += tt * tt * tt - tt;
  }
  const double nd = static_cast<double>(n);
  const double var = static_cast<double>(nab) / 12.0 * ((nd + 1.0) - tie_term / (nd * (nd - 1.0)));
  if (!(var > 0.0)) {
    r.p_value = 1.0;
    return r;
  }
  const double sd = std::sqrt(var);
  if (alternative == Alternative::kGreater) {
    r.p_value = normal_upper((r.u_a - mu - 0.5) / sd);
  } else {
    const double z = (std::fabs(r.u_a - mu) - 0.5) / sd;
    r.p_value = std::min(1.0, 2.0 * normal_upper(z));
  }
  return r;
}

std::string to_string(Alternative alternative) {
  return alternative == Alternative::kGreater ? "greater" : "two-sided";
}

std::string to_string(PermutationMode mode) {
  return mode == PermutationMode::kExact ? "exact" : "monte-carlo";
}

}  // namespace emadapt
