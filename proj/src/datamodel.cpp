#include "emadapt/datamodel.hpp"

#include <algorithm>
#include <cmath>

#include "emadapt/error.hpp"

namespace emadapt {

namespace {

std::size_t checked_area(int width, int height) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kShapeError, "raster dimensions must be >= 1, got " +
                                            std::to_string(width) + "x" + std::to_string(height));
  }
  return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
}

}  // namespace

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (pixels_.size() != checked_area(width, height)) {
    throw Error(ErrorCode::kShapeError, "pixel count does not match image dimensions");
  }
}

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height), pixels_(checked_area(width, height), fill) {}

LabelMap::LabelMap(int width, int height, std::vector<std::uint32_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
  if (labels_.size() != checked_area(width, height)) {
    throw Error(ErrorCode::kShapeError, "label count does not match map dimensions");
  }
}

LabelMap::LabelMap(int width, int height, std::uint32_t fill)
    : width_(width), height_(height), labels_(checked_area(width, height), fill) {}

ProbMap::ProbMap(int width, int height, int channels)
    : width_(width), height_(height), channels_(channels) {
  if (channels < 1) throw Error(ErrorCode::kShapeError, "ProbMap needs at least one channel");
  values_.assign(checked_area(width, height) * static_cast<std::size_t>(channels), 0.0);
}

ProbMap::ProbMap(int width, int height, int channels, std::vector<double> values)
    : width_(width), height_(height), channels_(channels), values_(std::move(values)) {
  if (channels < 1) throw Error(ErrorCode::kShapeError, "ProbMap needs at least one channel");
  if (values_.size() != checked_area(width, height) * static_cast<std::size_t>(channels)) {
    throw Error(ErrorCode::kShapeError, "value count does not match ProbMap dimensions");
  }
}

void ProbMap::validate(double tol) const {
  const std::size_t n = pixel_count();
  for (std::size_t p = 0; p < n; ++p) {
    double sum = 0.0;
    for (int c = 0; c < channels_; ++c) {
      const double v = value(c, p);
      if (!(v >= -tol && v <= 1.0 + tol)) {
        throw Error(ErrorCode::kShapeError, "probability outside [0,1] at pixel " +
                                                std::to_string(p));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw Error(ErrorCode::kShapeError, "probabilities do not sum to 1 at pixel " +
                                              std::to_string(p));
    }
  }
}

EmbeddingVec::EmbeddingVec(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kShapeError, "embedding entry is not finite");
  }
}

DomainPool::DomainPool(std::string name, std::vector<Sample> samples)
    : name_(std::move(name)), samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const Sample& s = samples_[i];
    if (s.labels) {
      if (s.labels->width() != s.image.width() || s.labels->height() != s.image.height()) {
        throw Error(ErrorCode::kShapeError, "labels of sample '" + s.id +
                                                "' do not match its image shape");
      }
      labeled_.push_back(i);
    } else {
      unlabeled_.push_back(i);
    }
  }
}

bool DomainPool::is_labeled(std::size_t i) const {
  return std::binary_search(labeled_.begin(), labeled_.end(), i);
}

void DomainPool::mark_labeled(std::span<const std::size_t> ids) {
  std::vector<std::size_t> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::kOutOfRange, "duplicate id in annotation request");
  }
  for (std::size_t id : sorted) {
    if (!std::binary_search(unlabeled_.begin(), unlabeled_.end(), id)) {
      throw Error(ErrorCode::kOutOfRange, "sample " + std::to_string(id) + " is not unlabeled");
    }
    if (!samples_[id].labels) {
      throw Error(ErrorCode::kNoLabels, "no ground truth for sample '" + samples_[id].id + "'");
    }
  }
  std::vector<std::size_t> remaining;
  std::set_difference(unlabeled_.begin(), unlabeled_.end(), sorted.begin(), sorted.end(),
                      std::back_inserter(remaining));
  unlabeled_ = std::move(remaining);
  std::vector<std::size_t> merged;
  std::merge(labeled_.begin(), labeled_.end(), sorted.begin(), sorted.end(),
             std::back_inserter(merged));
  labeled_ = std::move(merged);
}

void DomainPool::reset_to_unlabeled() {
  labeled_.clear();
  unlabeled_.resize(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) unlabeled_[i] = i;
}

DomainPool DomainPool::subset(std::span<const std::size_t> indices, std::string name) const {
  DomainPool out;
  out.name_ = std::move(name);
  for (std::size_t i : indices) {
    const std::size_t j = out.samples_.size();
    out.samples_.push_back(samples_.at(i));
    (is_labeled(i) ? out.labeled_ : out.unlabeled_).push_back(j);
  }
  return out;
}

bool DomainPool::partition_ok() const {
  std::vector<std::size_t> all;
  std::merge(labeled_.begin(), labeled_.end(), unlabeled_.begin(), unlabeled_.end(),
             std::back_inserter(all));
  if (all.size() != samples_.size()) return false;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i] != i) return false;
  }
  return std::all_of(labeled_.begin(), labeled_.end(),
                     [&](std::size_t i) { return samples_[i].labels.has_value(); });
}

std::vector<std::uint8_t> membrane_mask(const LabelMap& labels) {
  std::vector<std::uint8_t> mask(labels.size());
  std::transform(labels.labels().begin(), labels.labels().end(), mask.begin(),
                 [](std::uint32_t l) { return l == kMembraneLabel ? 1 : 0; });
  return mask;
}

MeanSd mean_sd(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyRun, "no results to aggregate");
  MeanSd r;
  r.n = values.size();
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(r.n);
  if (r.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(r.n - 1));
  }
  return r;
}

}  // namespace emadapt
