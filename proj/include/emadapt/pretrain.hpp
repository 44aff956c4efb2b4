#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "emadapt/datamodel.hpp"
#include "emadapt/segeval.hpp"
#include "emadapt/segmodel.hpp"

namespace emadapt {

struct PretrainJob {
  std::string domain;
  ModelConfig model;
  TrainConfig train;
  int steps = 2000;
  double train_fraction = 0.8;
  std::filesystem::path output;  // checkpoint prefix; empty skips saving

  void validate() const;
};

// First floor(fraction * n) samples (at least one) train, the rest validate.
std::pair<DomainPool, DomainPool> split_train_val(const DomainPool& pool, double train_fraction);

struct PretrainResult {
  ModelParams model;
  std::vector<double> loss_history;
  double final_loss = 0.0;
  std::optional<VIResult> heldout_vi;  // absent when the split leaves no validation images
  std::size_t n_train = 0;
  std::size_t n_val = 0;
};

// Fresh init from the train seed, then `steps` updates on the train split.
PretrainResult pretrain_domain(const DomainPool& pool, const PretrainJob& job,
                               const WatershedConfig& watershed = {});

}  // namespace emadapt
