#include "emadapt/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "emadapt/error.hpp"
#include "emadapt/rng.hpp"
#include "emadapt/text.hpp"

namespace emadapt {

std::string to_string(AdaptMode mode) {
  switch (mode) {
    case AdaptMode::kScratch: return "scratch";
    case AdaptMode::kPassiveMinMmd: return "passive-minMMD";
    case AdaptMode::kActiveMaxMmd: return "active-maxMMD";
    case AdaptMode::kActiveMinMmd: return "active-minMMD";
  }
  return "unknown";
}

AdaptMode parse_mode(const std::string& name) {
  if (name == "scratch") return AdaptMode::kScratch;
  if (name == "passive-minMMD" || name == "passive-minmmd") return AdaptMode::kPassiveMinMmd;
  if (name == "active-maxMMD" || name == "active-maxmmd") return AdaptMode::kActiveMaxMmd;
  if (name == "active-minMMD" || name == "active-minmmd" || name == "neuroadda") {
    return AdaptMode::kActiveMinMmd;
  }
  throw Error(ErrorCode::kInvalidConfig, "unknown mode '" + name + "'");
}

std::vector<AdaptMode> all_modes() {
  return {AdaptMode::kScratch, AdaptMode::kPassiveMinMmd, AdaptMode::kActiveMaxMmd,
          AdaptMode::kActiveMinMmd};
}

std::string learning_type(AdaptMode mode) {
  return mode == AdaptMode::kScratch || mode == AdaptMode::kPassiveMinMmd ? "Passive" : "Active";
}

std::string transfer_domain(AdaptMode mode) {
  switch (mode) {
    case AdaptMode::kScratch: return "Scratch Training";
    case AdaptMode::kActiveMaxMmd: return "max MMD";
    default: return "min MMD";
  }
}

BudgetPlan plan_budget(int annotations, int train_steps, int iterations) {
  if (annotations < 1) throw Error(ErrorCode::kInvalidConfig, "annotation budget A must be >= 1");
  if (iterations < 1) throw Error(ErrorCode::kInvalidConfig, "iterations T must be >= 1");
  BudgetPlan p;
  p.annotations = annotations;
  p.train_steps = train_steps;
  p.t_requested = iterations;
  p.t_effective = std::min(iterations, annotations);
  if (train_steps < p.t_effective) {
    throw Error(ErrorCode::kInsufficientTrainingBudget,
                "B=" + std::to_string(train_steps) + " is below T_eff=" +
                    std::to_string(p.t_effective));
  }
  const int t = p.t_effective;
  for (int i = 0; i < t; ++i) {
    p.k.push_back(annotations / t + (i < annotations % t ? 1 : 0));
    p.s.push_back(train_steps / t + (i < train_steps % t ? 1 : 0));
  }
  return p;
}

void AdaptConfig::validate() const {
  model.validate();
  uncertainty.validate();
  kernel.validate();
  plan_budget(annotations, train_steps, iterations);
  if (train.convergence_tolerance != 0.0) {
    throw Error(ErrorCode::kInvalidConfig,
                "convergence stopping would break the fixed training budget");
  }
  if (train.batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "batch_size must be >= 1");
  if (mmd_sample_cap < 2) throw Error(ErrorCode::kInvalidConfig, "mmd_sample_cap must be >= 2");
}

SamplerKind AdaptConfig::effective_sampler() const {
  return mode == AdaptMode::kScratch || mode == AdaptMode::kPassiveMinMmd ? SamplerKind::kRandom
                                                                          : sampler;
}

std::vector<double> target_distances(const DomainPool& target,
                                     std::span<const SourceCandidate> candidates,
                                     const AdaptConfig& config) {
  if (candidates.empty()) throw Error(ErrorCode::kEmptyCandidates, "no source candidates");
  if (target.size() == 0) throw Error(ErrorCode::kEmptySet, "target pool is empty");
  // Distances use images only, so label state does not matter here.
  const auto target_idx =
      subsample_indices(target.size(), config.mmd_sample_cap, derive_seed(config.ods_seed, 0));
  std::vector<double> out;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const SourceCandidate& cand = candidates[c];
    if (!cand.model || !cand.pool) {
      throw Error(ErrorCode::kMissingModel, "candidate '" + cand.name + "' lacks a model or pool");
    }
    const auto src_idx =
        subsample_indices(cand.pool->size(), config.mmd_sample_cap, derive_seed(config.ods_seed, 1));
    const auto xs = embed_all(*cand.model, src_idx, *cand.pool);
    const auto ys = embed_all(*cand.model, target_idx, target);
    out.push_back(mmd2(xs, ys, config.kernel, config.estimator).value);
  }
  return out;
}

namespace {

AdaptResult run_impl(const DomainPool& target, std::span<const SourceCandidate> candidates,
                     const AdaptConfig& config, std::uint64_t seed,
                     const std::vector<double>* distances) {
  config.validate();
  RunRecord rec;
  rec.target = target.name();
  rec.mode = config.mode;
  rec.sampler = config.effective_sampler();
  rec.plan = plan_budget(config.annotations, config.train_steps, config.iterations);
  rec.seed = seed;

  DomainPool pool = target;
  pool.reset_to_unlabeled();
  if (pool.size() < static_cast<std::size_t>(config.annotations)) {
    throw Error(ErrorCode::kPoolExhausted, "target pool has " + std::to_string(pool.size()) +
                                               " images but A=" +
                                               std::to_string(config.annotations));
  }

  ModelParams model;
  if (config.mode == AdaptMode::kScratch) {
    model = init_model(config.model, derive_seed(seed, 0x5C7A));
  } else {
    if (candidates.empty()) throw Error(ErrorCode::kMissingModel, "no pretrained source models");
    std::vector<double> d = distances ? *distances : target_distances(pool, candidates, config);
    if (d.size() != candidates.size()) {
      throw Error(ErrorCode::kLengthMismatch, "one distance per candidate required");
    }
    const bool want_max = config.mode == AdaptMode::kActiveMaxMmd;
    std::size_t best = 0;
    for (std::size_t c = 1; c < d.size(); ++c) {
      if (want_max ? d[c] > d[best] : d[c] < d[best]) best = c;
    }
    for (const auto& c : candidates) rec.candidate_names.push_back(c.name);
    rec.candidate_distances = d;
    rec.source = candidates[best].name;
    if (!candidates[best].model) throw Error(ErrorCode::kMissingModel, "candidate has no model");
    model = *candidates[best].model;
  }
  model.reset_optimizer();
  rec.initial_hash = model.hash();

  for (int t = 0; t < rec.plan.t_effective; ++t) {
    IterationLog log;
    log.iteration = t;
    log.k = rec.plan.k[static_cast<std::size_t>(t)];
    log.steps = rec.plan.s[static_cast<std::size_t>(t)];
    const Selection sel =
        sample(rec.sampler, model, pool, log.k, config.uncertainty,
               derive_seed(seed, 1000 + static_cast<std::uint64_t>(t)), config.sampler_options);
    pool.mark_labeled(sel.indices);
    log.picked = sel.indices;
    for (std::size_t i : sel.indices) log.picked_ids.push_back(pool.sample(i).id);
    log.warnings = sel.warnings;
    rec.annotations_used += static_cast<int>(sel.indices.size());

    std::vector<const Sample*> labeled;
    for (std::size_t i : pool.labeled_ids()) labeled.push_back(&pool.sample(i));
    TrainConfig tc = config.train;
    tc.seed = derive_seed(seed, 2000 + static_cast<std::uint64_t>(t));
    TrainResult tr = train_steps(model, labeled, tc, log.steps);
    model = std::move(tr.params);
    rec.steps_used += tr.steps_run;
    log.final_loss = tr.loss_history.empty() ? 0.0 : tr.loss_history.back();
    log.labeled_after = pool.labeled_ids().size();
    rec.iterations.push_back(std::move(log));
  }
  rec.final_hash = model.hash();
  return {std::move(model), std::move(rec)};
}

}  // namespace

AdaptResult run_adaptation(const DomainPool& target, std::span<const SourceCandidate> candidates,
                           const AdaptConfig& config, std::uint64_t seed) {
  return run_impl(target, candidates, config, seed, nullptr);
}

AdaptResult run_neuroadda(const DomainPool& target, std::span<const SourceCandidate> candidates,
                          AdaptConfig config, std::uint64_t seed) {
  config.mode = AdaptMode::kActiveMinMmd;
  return run_impl(target, candidates, config, seed, nullptr);
}

AdaptResult run_baseline(const DomainPool& target, std::span<const SourceCandidate> candidates,
                         AdaptMode mode, AdaptConfig config, std::uint64_t seed) {
  config.mode = mode;
  return run_impl(target, candidates, config, seed, nullptr);
}

void GridConfig::validate() const {
  if (targets.empty()) throw Error(ErrorCode::kInvalidConfig, "grid has no targets");
  if (modes.empty()) throw Error(ErrorCode::kInvalidConfig, "grid has no modes");
  if (samplers.empty()) throw Error(ErrorCode::kInvalidConfig, "grid has no samplers");
  if (seeds.empty()) throw Error(ErrorCode::kInvalidConfig, "grid needs at least one seed");
  if (sample_sizes.empty()) throw Error(ErrorCode::kInvalidConfig, "grid has no sample sizes");
  for (int a : sample_sizes) {
    if (a < 1) throw Error(ErrorCode::kInvalidConfig, "sample sizes must be positive");
  }
  watershed.validate();
}

std::vector<RunRecord> run_experiment_grid(std::span<const GridDomain> domains,
                                           const GridConfig& config) {
  config.validate();
  std::vector<RunRecord> records;
  for (const auto& target_name : config.targets) {
    const GridDomain* target = nullptr;
    std::vector<SourceCandidate> candidates;
    for (const auto& d : domains) {
      if (d.name == target_name) {
        target = &d;
      } else {
        candidates.push_back({d.name, d.model, d.train});
      }
    }
    if (!target || !target->train || !target->test) {
      throw Error(ErrorCode::kUnknownDomain, "target '" + target_name + "' has no train/test pool");
    }
    DomainPool pool = *target->train;
    pool.reset_to_unlabeled();
    std::vector<double> distances;
    const bool needs_sources =
        std::any_of(config.modes.begin(), config.modes.end(),
                    [](AdaptMode m) { return m != AdaptMode::kScratch; });
    if (needs_sources) distances = target_distances(pool, candidates, config.base);

    for (AdaptMode mode : config.modes) {
      std::vector<SamplerKind> samplers = config.samplers;
      if (mode == AdaptMode::kScratch || mode == AdaptMode::kPassiveMinMmd) {
        samplers = {SamplerKind::kRandom};
      }
      for (SamplerKind sampler : samplers) {
        for (int a : config.sample_sizes) {
          for (std::uint64_t seed : config.seeds) {
            AdaptConfig cfg = config.base;
            cfg.mode = mode;
            cfg.sampler = sampler;
            cfg.annotations = a;
            AdaptResult r = run_impl(pool, candidates, cfg, seed, needs_sources ? &distances : nullptr);
            r.record.test = evaluate_model(r.model, *target->test, config.watershed,
                                           config.ignore_gt_zero);
            records.push_back(std::move(r.record));
          }
        }
      }
    }
  }
  return records;
}

std::string records_to_csv(std::span<const RunRecord> records) {
  std::string out =
      "target,mode,sampler,A,B,T_effective,seed,source,annotations_used,steps_used,"
      "vi_split,vi_merge,vi_total,initial_hash,final_hash\n";
  for (const auto& r : records) {
    const VIResult vi = r.test ? r.test->mean : VIResult{};
    const std::vector<std::string> fields{r.target, to_string(r.mode), to_string(r.sampler),
                 std::to_string(r.plan.annotations), std::to_string(r.plan.train_steps),
                 std::to_string(r.plan.t_effective), std::to_string(r.seed), r.source,
                 std::to_string(r.annotations_used), std::to_string(r.steps_used),
                 format_real(vi.vi_split), format_real(vi.vi_merge), format_real(vi.vi_total),
                 r.initial_hash, r.final_hash};
    out += join(fields, ",") + "\n";
  }
  return out;
}

namespace {

struct RowKey {
  std::string target;
  AdaptMode mode;
  SamplerKind sampler;
  bool operator==(const RowKey&) const = default;
};

double mean_of(const std::vector<double>& v) { return mean_sd(v).mean; }

double sample_sd(const std::vector<double>& v) { return mean_sd(v).sd; }

}  // namespace

std::string results_table_csv(std::span<const RunRecord> records) {
  std::vector<RowKey> rows;
  std::vector<int> sizes;
  std::map<std::pair<std::size_t, int>, std::vector<double>> cells;
  for (const auto& r : records) {
    if (!r.test) continue;
    RowKey key{r.target, r.mode, r.sampler};
    auto it = std::find(rows.begin(), rows.end(), key);
    if (it == rows.end()) it = rows.insert(rows.end(), key);
    const std::size_t row = static_cast<std::size_t>(it - rows.begin());
    if (std::find(sizes.begin(), sizes.end(), r.plan.annotations) == sizes.end()) {
      sizes.push_back(r.plan.annotations);
    }
    cells[{row, r.plan.annotations}].push_back(r.test->mean.vi_total);
  }
  std::sort(sizes.begin(), sizes.end());

  // Minimum mean per (target, A).
  std::map<std::pair<std::string, int>, double> best;
  for (const auto& [key, values] : cells) {
    const auto k = std::make_pair(rows[key.first].target, key.second);
    const double m = mean_of(values);
    auto it = best.find(k);
    if (it == best.end() || m < it->second) best[k] = m;
  }

  std::string out = "target,learning_type,transfer_domain,sampler";
  for (int a : sizes) out += ",S" + std::to_string(a);
  out += "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const RowKey& k = rows[i];
    out += k.target + "," + learning_type(k.mode) + "," + transfer_domain(k.mode) + "," +
           to_string(k.sampler);
    for (int a : sizes) {
      out += ",";
      const auto it = cells.find({i, a});
      if (it == cells.end()) continue;
      const double m = mean_of(it->second);
      out += format_fixed(m, 3) + "\xC2\xB1" + format_fixed(sample_sd(it->second), 3);
      if (m == best.at({k.target, a})) out += "*";
    }
    out += "\n";
  }
  return out;
}

std::vector<SamplerResult> sampler_results(std::span<const RunRecord> records) {
  std::map<std::tuple<std::string, int, std::string>, std::vector<double>> groups;
  for (const auto& r : records) {
    if (r.mode != AdaptMode::kActiveMinMmd || !r.test) continue;
    groups[{r.target, r.plan.annotations, to_string(r.sampler)}].push_back(r.test->mean.vi_total);
  }
  std::vector<SamplerResult> out;
  for (const auto& [key, values] : groups) {
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), mean_of(values)});
  }
  return out;
}

}  // namespace emadapt
