#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace emadapt {

/// 8-bit grayscale raster, row-major.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::vector<std::uint8_t> pixels);
  GrayImage(int width, int height, std::uint8_t fill = 0);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }

  std::uint8_t at(int x, int y) const { return pixels_[index(x, y)]; }
  std::uint8_t& at(int x, int y) { return pixels_[index(x, y)]; }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> pixels() noexcept { return pixels_; }

  bool operator==(const GrayImage&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Label 0 is membrane / boundary, labels >= 1 are instances.
inline constexpr std::uint32_t kMembraneLabel = 0;

/// Instance labels, row-major.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int width, int height, std::vector<std::uint32_t> labels);
  LabelMap(int width, int height, std::uint32_t fill = 0);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return labels_.size(); }

  std::uint32_t at(int x, int y) const { return labels_[index(x, y)]; }
  std::uint32_t& at(int x, int y) { return labels_[index(x, y)]; }

  std::span<const std::uint32_t> labels() const noexcept { return labels_; }
  std::span<std::uint32_t> labels() noexcept { return labels_; }

  bool operator==(const LabelMap&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> labels_;
};

/// Per-pixel class probabilities, stored channel-major: value(c, x, y) lives at
/// c * width * height + y * width + x.
class ProbMap {
 public:
  ProbMap() = default;
  ProbMap(int width, int height, int channels);
  ProbMap(int width, int height, int channels, std::vector<double> values);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  double value(int c, std::size_t pixel) const { return values_[c * pixel_count() + pixel]; }
  double& value(int c, std::size_t pixel) { return values_[c * pixel_count() + pixel]; }

  std::span<const double> channel(int c) const {
    return std::span<const double>(values_).subspan(c * pixel_count(), pixel_count());
  }
  std::span<double> channel(int c) {
    return std::span<double>(values_).subspan(c * pixel_count(), pixel_count());
  }

  std::span<const double> values() const noexcept { return values_; }

  // Throws ShapeError unless every pixel is a point of the simplex within tol.
  void validate(double tol = 1e-5) const;

  bool operator==(const ProbMap&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

/// Fixed-length feature vector taken from the model bottleneck.
class EmbeddingVec {
 public:
  EmbeddingVec() = default;
  explicit EmbeddingVec(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }

  bool operator==(const EmbeddingVec&) const = default;

 private:
  std::vector<double> values_;
};

struct ArtifactFlags {
  bool white_stripe = false;
  bool black_tile = false;
  bool contrast = false;

  bool any() const noexcept { return white_stripe || black_tile || contrast; }
  bool operator==(const ArtifactFlags&) const = default;
};

struct Sample {
  std::string id;
  GrayImage image;
  std::optional<LabelMap> labels;
  ArtifactFlags artifacts;

  bool operator==(const Sample&) const = default;
};

/// Named collection of samples split into a labeled set L and unlabeled set U.
/// Labels of unlabeled samples may be present; they act as the annotation
/// oracle and are only exposed through mark_labeled().
class DomainPool {
 public:
  DomainPool() = default;
  // Samples with labels start labeled, the rest unlabeled.
  DomainPool(std::string name, std::vector<Sample> samples);

  const std::string& name() const noexcept { return name_; }
  std::size_t size() const noexcept { return samples_.size(); }
  const Sample& sample(std::size_t i) const { return samples_.at(i); }
  std::span<const Sample> samples() const noexcept { return samples_; }

  const std::vector<std::size_t>& labeled_ids() const noexcept { return labeled_; }
  const std::vector<std::size_t>& unlabeled_ids() const noexcept { return unlabeled_; }

  bool is_labeled(std::size_t i) const;

  // Moves ids from U to L. Throws NoLabels if any id lacks ground truth and
  // OutOfRange if an id is not currently unlabeled.
  void mark_labeled(std::span<const std::size_t> ids);

  // Every sample moved to U (the source-free starting point).
  void reset_to_unlabeled();

  // Pool restricted to the given indices, with ids preserved and L/U carried over.
  DomainPool subset(std::span<const std::size_t> indices, std::string name) const;

  // Labeled and unlabeled sets partition [0, size) and labeled samples carry labels.
  bool partition_ok() const;

  bool operator==(const DomainPool&) const = default;

 private:
  std::string name_;
  std::vector<Sample> samples_;
  std::vector<std::size_t> labeled_;
  std::vector<std::size_t> unlabeled_;
};

/// Variation of information between an instance segmentation and ground truth,
/// in nats. vi_split = H(gt | pred), vi_merge = H(pred | gt).
struct VIResult {
  double vi_split = 0.0;
  double vi_merge = 0.0;
  double vi_total = 0.0;
  std::size_t pixel_count = 0;
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1), 0 for one value
  std::size_t n = 0;
};

// EmptyRun when there are no values.
MeanSd mean_sd(std::span<const double> values);

// Binary membrane target: 1 where the label is membrane.
std::vector<std::uint8_t> membrane_mask(const LabelMap& labels);

}  // namespace emadapt
