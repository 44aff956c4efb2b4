#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "emadapt/datamodel.hpp"

namespace emadapt {

/// U-Net shape. Channel count doubles per down-sampling stage, so the
/// bottleneck has base_channels * 2^depth channels.
struct ModelConfig {
  int depth = 3;
  int base_channels = 16;
  int num_classes = 2;  // channel 0 = membrane, channel 1 = non-membrane
  double dropout_rate = 0.1;
  int input_size = 128;

  // InvalidConfig for bad depth / classes / rate, ShapeError when input_size
  // is not a multiple of 2^depth.
  void validate() const;

  int size_multiple() const noexcept { return 1 << depth; }
  int channels_at(int level) const noexcept { return base_channels << level; }
  int bottleneck_channels() const noexcept { return base_channels << depth; }

  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  int batch_size = 1;
  double learning_rate = 1e-3;
  bool random_crop = true;
  bool augment = true;  // random dihedral flips/rotations
  std::uint64_t seed = 0;
  // Optional early stop: halt once the mean loss of the last window improves on
  // the window before it by less than this relative amount. 0 disables it.
  double convergence_tolerance = 0.0;
  int convergence_window = 50;

  bool operator==(const TrainConfig&) const = default;
};

struct ParamTensor {
  std::string name;
  Eigen::MatrixXd value;
};

/// Weights of one network plus its Adam moments.
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(ModelConfig config, std::vector<ParamTensor> tensors);

  const ModelConfig& config() const noexcept { return config_; }
  std::span<const ParamTensor> tensors() const noexcept { return tensors_; }
  std::span<ParamTensor> tensors() noexcept { return tensors_; }

  std::size_t parameter_count() const;

  // SHA-1 over tensor names, shapes and little-endian values.
  std::string hash() const;

  // Adam state; empty until the first update.
  std::vector<Eigen::MatrixXd>& first_moment() noexcept { return m_; }
  std::vector<Eigen::MatrixXd>& second_moment() noexcept { return v_; }
  long long& adam_steps() noexcept { return adam_steps_; }
  void reset_optimizer();

 private:
  ModelConfig config_;
  std::vector<ParamTensor> tensors_;
  std::vector<Eigen::MatrixXd> m_;
  std::vector<Eigen::MatrixXd> v_;
  long long adam_steps_ = 0;
};

// Closed-form parameter count of the architecture for a single input channel.
std::size_t architecture_parameter_count(const ModelConfig& config);

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_history;  // one entry per gradient update
  int steps_run = 0;
};

// Exactly `steps` Adam updates (fewer only when convergence stopping is on),
// each on batch_size randomly drawn (and optionally cropped / flipped)
// labeled samples. Pixel-wise softmax cross-entropy against the membrane mask.
TrainResult train_steps(const ModelParams& params, std::span<const Sample* const> labeled,
                        const TrainConfig& config, int steps);

ProbMap predict(const ModelParams& params, const GrayImage& image);

// One dropout-on pass; masks are drawn from `seed`.
ProbMap predict_stochastic(const ModelParams& params, const GrayImage& image,
                           std::uint64_t seed);

// Global spatial max-pool of the bottleneck activation (dropout off).
EmbeddingVec embed(const ModelParams& params, const GrayImage& image);

/// Deterministic forward pass exposing intermediate features.
struct ForwardView {
  ProbMap probs;
  // Last decoder block output, channel-major (channels x pixels).
  Eigen::MatrixXd penultimate;
  EmbeddingVec embedding;
};

ForwardView inspect(const ModelParams& params, const GrayImage& image);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> gradient;  // same order and shapes as tensors()
};

// Mean cross-entropy of one image against a membrane mask (1 = membrane) and
// its analytic gradient. With a dropout seed the same masks are used that
// predict_stochastic(seed) would draw.
LossAndGradient loss_and_gradient(const ModelParams& params, const GrayImage& image,
                                  std::span<const std::uint8_t> membrane,
                                  std::optional<std::uint64_t> dropout_seed = std::nullopt);

// Checkpoint: <prefix>.bin (little-endian float64 blob) and <prefix>.json
// (architecture descriptor, tensor table, parameter hash).
void save_checkpoint(const ModelParams& params, const std::filesystem::path& prefix);
ModelParams load_checkpoint(const std::filesystem::path& prefix);

}  // namespace emadapt
