#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emadapt/datamodel.hpp"
#include "emadapt/mmd.hpp"
#include "emadapt/sampling.hpp"
#include "emadapt/segeval.hpp"
#include "emadapt/segmodel.hpp"
#include "emadapt/uncertainty.hpp"

namespace emadapt {

enum class AdaptMode { kScratch, kPassiveMinMmd, kActiveMaxMmd, kActiveMinMmd };

// scratch, passive-minMMD, active-maxMMD, active-minMMD.
std::string to_string(AdaptMode mode);
// Also accepts "neuroadda" for active-minMMD.
AdaptMode parse_mode(const std::string& name);
std::vector<AdaptMode> all_modes();
std::string learning_type(AdaptMode mode);     // "Passive" or "Active"
std::string transfer_domain(AdaptMode mode);   // "Scratch Training", "min MMD", "max MMD"

struct BudgetPlan {
  int annotations = 0;  // A
  int train_steps = 0;  // B
  int t_requested = 0;
  int t_effective = 0;
  std::vector<int> k;  // annotations per iteration
  std::vector<int> s;  // gradient steps per iteration
};

// T_eff = min(T, A); remainders go one each to the earliest iterations.
BudgetPlan plan_budget(int annotations, int train_steps, int iterations);

struct AdaptConfig {
  AdaptMode mode = AdaptMode::kActiveMinMmd;
  SamplerKind sampler = SamplerKind::kMedianUncertainty;
  int annotations = 4;
  int train_steps = 200;
  int iterations = 4;
  ModelConfig model;  // fresh-init architecture for scratch mode
  TrainConfig train;  // seed is replaced per iteration
  UncertaintyConfig uncertainty;
  SamplerOptions sampler_options;
  KernelConfig kernel;
  MmdEstimator estimator = MmdEstimator::kBiased;
  std::size_t mmd_sample_cap = 32;
  // Seed of the source-selection subsample; fixed so the chosen source does not
  // depend on the run seed.
  std::uint64_t ods_seed = 0;

  void validate() const;
  // Sampler actually used: random for scratch and passive modes.
  SamplerKind effective_sampler() const;
};

struct SourceCandidate {
  std::string name;
  const ModelParams* model = nullptr;
  const DomainPool* pool = nullptr;  // source images, embedded by `model`
};

// MMD between each candidate's own images and the target images (labels unused),
// both embedded by the candidate model.
std::vector<double> target_distances(const DomainPool& target,
                                     std::span<const SourceCandidate> candidates,
                                     const AdaptConfig& config);

struct IterationLog {
  int iteration = 0;
  int k = 0;
  int steps = 0;
  std::vector<std::size_t> picked;
  std::vector<std::string> picked_ids;
  std::vector<std::string> warnings;
  double final_loss = 0.0;
  std::size_t labeled_after = 0;
};

struct RunRecord {
  std::string target;
  AdaptMode mode = AdaptMode::kActiveMinMmd;
  SamplerKind sampler = SamplerKind::kRandom;
  BudgetPlan plan;
  std::uint64_t seed = 0;
  std::string source;  // empty for scratch
  std::vector<std::string> candidate_names;
  std::vector<double> candidate_distances;
  std::string initial_hash;
  std::string final_hash;
  std::vector<IterationLog> iterations;
  int annotations_used = 0;
  int steps_used = 0;
  std::optional<Evaluation> test;
};

struct AdaptResult {
  ModelParams model;
  RunRecord record;
};

// Algorithm loop for any mode. The target pool is copied and reset to fully
// unlabeled; labels are revealed only for sampled images.
AdaptResult run_adaptation(const DomainPool& target, std::span<const SourceCandidate> candidates,
                           const AdaptConfig& config, std::uint64_t seed);
// Active learning from the min-MMD source.
AdaptResult run_neuroadda(const DomainPool& target, std::span<const SourceCandidate> candidates,
                          AdaptConfig config, std::uint64_t seed);
AdaptResult run_baseline(const DomainPool& target, std::span<const SourceCandidate> candidates,
                         AdaptMode mode, AdaptConfig config, std::uint64_t seed);

struct GridDomain {
  std::string name;
  const DomainPool* train = nullptr;  // adaptation pool when this is the target
  const DomainPool* test = nullptr;   // held-out evaluation pool
  const ModelParams* model = nullptr; // pretrained on this domain
};

struct GridConfig {
  std::vector<std::string> targets;
  std::vector<AdaptMode> modes = all_modes();
  std::vector<SamplerKind> samplers = {SamplerKind::kMedianUncertainty};
  std::vector<int> sample_sizes = {1, 2, 4};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  AdaptConfig base;
  WatershedConfig watershed;
  bool ignore_gt_zero = true;

  void validate() const;
};

// One record per (target, mode, sampler, A, seed); scratch and passive modes
// use the random sampler only. Every record carries its test evaluation.
// Source candidates for a target are all other grid domains.
std::vector<RunRecord> run_experiment_grid(std::span<const GridDomain> domains,
                                           const GridConfig& config);

// One row per record.
std::string records_to_csv(std::span<const RunRecord> records);

// Rows (target, learning type, transfer domain, sampler), columns S<A> with
// "mean±std"; a trailing '*' marks the per-(target, column) minimum mean.
std::string results_table_csv(std::span<const RunRecord> records);

// Mean test vi_total per (target, A, sampler) over active-minMMD runs.
std::vector<SamplerResult> sampler_results(std::span<const RunRecord> records);

}  // namespace emadapt
