#pragma once

#include <span>
#include <string>
#include <vector>

#include "emadapt/datamodel.hpp"
#include "emadapt/segmodel.hpp"

namespace emadapt {

struct WatershedConfig {
  double threshold = 0.5;  // seeds are pixels with membrane prob below this
  int min_seed_area = 8;
  // Evaluation only: a map without seeds is scored as one instance instead of
  // raising NoSeeds.
  bool single_instance_on_no_seeds = true;

  void validate() const;
};

// Seeds: 4-connected components of {p < threshold} with area >= min_seed_area,
// labeled 1..n in raster order of their first pixel. Throws NoSeeds.
LabelMap watershed_seeds(std::span<const double> membrane, int width, int height,
                         const WatershedConfig& config);

// Priority flood from nonzero seed labels, ascending by (membrane value, pixel
// index). Every pixel ends up with a seed label.
LabelMap flood_from_seeds(std::span<const double> membrane, int width, int height,
                          const LabelMap& seeds);

LabelMap seeded_watershed(std::span<const double> membrane, int width, int height,
                          const WatershedConfig& config);
// Uses channel 0 (membrane).
LabelMap seeded_watershed(const ProbMap& probs, const WatershedConfig& config);

// Two-channel map that is 1 on gt membrane pixels and 0 elsewhere.
ProbMap membrane_probs_from_labels(const LabelMap& labels);

VIResult variation_of_information(const LabelMap& pred, const LabelMap& gt,
                                  bool ignore_gt_zero = true);

struct ImageEvaluation {
  std::string image_id;
  VIResult vi;
  bool no_seeds = false;
};

struct Evaluation {
  std::vector<ImageEvaluation> per_image;
  VIResult mean;  // unweighted over images
};

Evaluation evaluate_predictions(std::span<const ProbMap> predictions, const DomainPool& test,
                                const WatershedConfig& config, bool ignore_gt_zero = true);
Evaluation evaluate_model(const ModelParams& model, const DomainPool& test,
                          const WatershedConfig& config, bool ignore_gt_zero = true);

std::string evaluation_to_csv(const Evaluation& evaluation);

// One mean-VI cell of a sampler comparison.
struct SamplerResult {
  std::string target;
  int sample_size = 0;
  std::string sampler;
  double mean_vi = 0.0;
};

struct EfficacyEntry {
  std::string sampler;
  std::string strategy_class;
  double percent = 0.0;
};

struct EfficacyReport {
  std::vector<EfficacyEntry> entries;  // in the order of `samplers`
  std::size_t settings_used = 0;
  std::vector<std::string> warnings;
};

// Share of (target, sample size) settings where each sampler has the lowest
// mean VI; ties split equally. Settings missing a sampler are skipped.
EfficacyReport sampler_efficacy(std::span<const SamplerResult> results,
                                std::span<const std::string> samplers);

std::string efficacy_to_csv(const EfficacyReport& report);

}  // namespace emadapt
