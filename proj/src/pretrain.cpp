#include "emadapt/pretrain.hpp"

#include <algorithm>
#include <cmath>

#include "emadapt/error.hpp"
#include "emadapt/rng.hpp"

namespace emadapt {

void PretrainJob::validate() const {
  if (steps < 1) throw Error(ErrorCode::kInvalidSteps, "pretraining needs at least one step");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "train_fraction must lie in (0, 1]");
  }
  model.validate();
}

std::pair<DomainPool, DomainPool> split_train_val(const DomainPool& pool, double train_fraction) {
  if (pool.size() == 0) throw Error(ErrorCode::kEmptySet, "pool is empty");
  std::size_t n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(pool.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, pool.size());
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  for (std::size_t i = 0; i < pool.size(); ++i) (i < n_train ? train : val).push_back(i);
  return {pool.subset(train, pool.name()), pool.subset(val, pool.name())};
}

PretrainResult pretrain_domain(const DomainPool& pool, const PretrainJob& job,
                               const WatershedConfig& watershed) {
  job.validate();
  auto [train, val] = split_train_val(pool, job.train_fraction);
  std::vector<const Sample*> labeled;
  for (const Sample& s : train.samples()) {
    if (!s.labels) throw Error(ErrorCode::kNoLabels, "training image '" + s.id + "' has no labels");
    labeled.push_back(&s);
  }
  PretrainResult r;
  r.n_train = train.size();
  r.n_val = val.size();
  const ModelParams init = init_model(job.model, derive_seed(job.train.seed, 0x1417));
  TrainResult tr = train_steps(init, labeled, job.train, job.steps);
  r.model = std::move(tr.params);
  r.model.reset_optimizer();
  r.loss_history = std::move(tr.loss_history);
  r.final_loss = r.loss_history.empty() ? 0.0 : r.loss_history.back();
  if (val.size() > 0) r.heldout_vi = evaluate_model(r.model, val, watershed).mean;
  if (!job.output.empty()) save_checkpoint(r.model, job.output);
  return r;
}

}  // namespace emadapt
